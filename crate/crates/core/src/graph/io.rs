//! Versioned JSON export and import of an interaction graph.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::IpAddr;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow_table::FlowKey;
use crate::ingest::PerPacketFeature;

use super::{AggKind, Histogram, InteractionGraph, LongEdge, ShortEdge, Vertex, VertexKey, VertexKind};

pub const GRAPH_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GraphIoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt graph file: {0}")]
    Corrupt(String),
    #[error("unsupported graph version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    version: u32,
    vertices: Vec<VertexRow>,
    short_edges: Vec<ShortRow>,
    long_edges: Vec<LongRow>,
}

#[derive(Serialize, Deserialize)]
struct VertexRow {
    id: usize,
    kind: VertexKind,
    addrs: Vec<IpAddr>,
}

#[derive(Serialize, Deserialize)]
struct ShortRow {
    src: usize,
    dst: usize,
    agg_kind: AggKind,
    features: Vec<PerPacketFeature>,
    members: Vec<FlowKey>,
    flow_count: usize,
    first_ts: f64,
    last_ts: f64,
    protocol_mask: u16,
}

#[derive(Serialize, Deserialize)]
struct HistRow {
    bucket_width: f64,
    bins: Vec<(u32, u32)>,
}

#[derive(Serialize, Deserialize)]
struct LongRow {
    src: usize,
    dst: usize,
    key: FlowKey,
    len_hist: HistRow,
    interval_hist: HistRow,
    proto_hist: HistRow,
    fct: f64,
    pkt_count: usize,
    first_ts: f64,
    last_ts: f64,
}

impl From<&Histogram> for HistRow {
    fn from(h: &Histogram) -> Self {
        HistRow { bucket_width: h.bucket_width, bins: h.bins.iter().map(|(&k, &v)| (k, v)).collect() }
    }
}

impl HistRow {
    fn into_histogram(self) -> Result<Histogram, GraphIoError> {
        let mut bins = BTreeMap::new();
        for (code, count) in self.bins {
            if count == 0 || bins.insert(code, count).is_some() {
                return Err(GraphIoError::Corrupt(format!("bad histogram bin {code}")));
            }
        }
        Ok(Histogram { bucket_width: self.bucket_width, bins })
    }
}

fn to_file(g: &InteractionGraph) -> GraphFile {
    GraphFile {
        version: GRAPH_VERSION,
        vertices: g
            .vertices()
            .iter()
            .map(|v| VertexRow { id: v.id, kind: v.key.kind(), addrs: v.key.addrs().to_vec() })
            .collect(),
        short_edges: g
            .short_edges()
            .iter()
            .zip(&g.short_ends)
            .map(|(e, &(src, dst))| ShortRow {
                src,
                dst,
                agg_kind: e.agg_kind,
                features: e.features.clone(),
                members: e.members.clone(),
                flow_count: e.flow_count,
                first_ts: e.first_ts,
                last_ts: e.last_ts,
                protocol_mask: e.protocol_mask,
            })
            .collect(),
        long_edges: g
            .long_edges()
            .iter()
            .zip(&g.long_ends)
            .map(|(e, &(src, dst))| LongRow {
                src,
                dst,
                key: e.key,
                len_hist: (&e.len_hist).into(),
                interval_hist: (&e.interval_hist).into(),
                proto_hist: (&e.proto_hist).into(),
                fct: e.fct,
                pkt_count: e.pkt_count,
                first_ts: e.first_ts,
                last_ts: e.last_ts,
            })
            .collect(),
    }
}

fn from_file(f: GraphFile) -> Result<InteractionGraph, GraphIoError> {
    let corrupt = |m: String| GraphIoError::Corrupt(m);
    if f.version != GRAPH_VERSION {
        return Err(GraphIoError::Version { found: f.version, expected: GRAPH_VERSION });
    }
    let mut vertices = Vec::with_capacity(f.vertices.len());
    let mut seen = std::collections::HashSet::new();
    for (i, v) in f.vertices.into_iter().enumerate() {
        if v.id != i {
            return Err(corrupt(format!("vertex id {} at position {i}", v.id)));
        }
        let key = match v.kind {
            VertexKind::Single if v.addrs.len() == 1 => VertexKey::Single(v.addrs[0]),
            VertexKind::Group if v.addrs.len() >= 2 && v.addrs.windows(2).all(|w| w[0] < w[1]) => {
                VertexKey::Group(v.addrs)
            }
            _ => return Err(corrupt(format!("vertex {i} has inconsistent addresses"))),
        };
        if !seen.insert(key.clone()) {
            return Err(corrupt(format!("duplicate vertex {i}")));
        }
        vertices.push(Vertex { id: i, key });
    }
    let n = vertices.len();
    let check = |s: usize, d: usize| -> Result<(), GraphIoError> {
        if s >= n || d >= n {
            Err(GraphIoError::Corrupt(format!("edge endpoint ({s}, {d}) out of range")))
        } else {
            Ok(())
        }
    };
    let mut short = Vec::with_capacity(f.short_edges.len());
    for r in f.short_edges {
        check(r.src, r.dst)?;
        if r.flow_count != r.members.len() || r.flow_count == 0 {
            return Err(corrupt("short edge flow count mismatch".into()));
        }
        let e = ShortEdge {
            src: vertices[r.src].key.clone(),
            dst: vertices[r.dst].key.clone(),
            agg_kind: r.agg_kind,
            features: r.features,
            members: r.members,
            flow_count: r.flow_count,
            first_ts: r.first_ts,
            last_ts: r.last_ts,
            protocol_mask: r.protocol_mask,
        };
        short.push((r.src, r.dst, e));
    }
    let mut long = Vec::with_capacity(f.long_edges.len());
    for r in f.long_edges {
        check(r.src, r.dst)?;
        if vertices[r.src].key != VertexKey::Single(r.key.src) || vertices[r.dst].key != VertexKey::Single(r.key.dst) {
            return Err(corrupt("long edge endpoints disagree with its key".into()));
        }
        let e = LongEdge {
            key: r.key,
            len_hist: r.len_hist.into_histogram()?,
            interval_hist: r.interval_hist.into_histogram()?,
            proto_hist: r.proto_hist.into_histogram()?,
            fct: r.fct,
            pkt_count: r.pkt_count,
            first_ts: r.first_ts,
            last_ts: r.last_ts,
        };
        long.push((r.src, r.dst, e));
    }
    Ok(InteractionGraph::from_parts(vertices, short, long))
}

pub fn to_json(g: &InteractionGraph) -> String {
    serde_json::to_string(&to_file(g)).expect("graph serialisation is infallible")
}

pub fn from_json(s: &str) -> Result<InteractionGraph, GraphIoError> {
    let f: GraphFile = serde_json::from_str(s).map_err(|e| GraphIoError::Corrupt(e.to_string()))?;
    from_file(f)
}

pub fn export_graph(g: &InteractionGraph, path: impl AsRef<Path>) -> Result<(), GraphIoError> {
    let path = path.as_ref();
    let io_err = |source| GraphIoError::Io { path: path.display().to_string(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    serde_json::to_writer(&mut w, &to_file(g)).map_err(|e| GraphIoError::Corrupt(e.to_string()))?;
    w.write_all(b"\n").map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn import_graph(path: impl AsRef<Path>) -> Result<InteractionGraph, GraphIoError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| GraphIoError::Io { path: path.display().to_string(), source })?;
    let f: GraphFile =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| GraphIoError::Corrupt(e.to_string()))?;
    from_file(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow_table::FlowRecord;
    use crate::ingest::{L4Proto, MASK_TCP};

    fn sample() -> InteractionGraph {
        let mut short = Vec::new();
        for i in 0..25u16 {
            short.push(FlowRecord {
                key: FlowKey {
                    src: "10.0.0.1".parse().unwrap(),
                    dst: format!("10.0.1.{i}").parse().unwrap(),
                    sport: 1000 + i,
                    dport: 22,
                },
                features: vec![PerPacketFeature { mask: MASK_TCP, len: 60, interval: 0.0 }],
                first_ts: 0.1 * i as f64,
                last_ts: 0.1 * i as f64 + 0.3,
                proto: L4Proto::Tcp,
            });
        }
        let long = FlowRecord {
            key: FlowKey { src: "10.0.0.1".parse().unwrap(), dst: "10.0.0.2".parse().unwrap(), sport: 5, dport: 6 },
            features: (0..16).map(|i| PerPacketFeature { mask: MASK_TCP, len: 100 + i, interval: 0.0013 }).collect(),
            first_ts: 1.0,
            last_ts: 1.0 + 15.0 * 0.0013,
            proto: L4Proto::Tcp,
        };
        InteractionGraph::from_flows(&short, &[long], 20)
    }

    #[test]
    fn empty_round_trip() {
        let g = InteractionGraph::new();
        assert_eq!(from_json(&to_json(&g)).unwrap(), g);
    }

    #[test]
    fn file_round_trip() {
        let g = sample();
        let f = tempfile::NamedTempFile::new().unwrap();
        export_graph(&g, f.path()).unwrap();
        assert_eq!(import_graph(f.path()).unwrap(), g);
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let g = sample();
        let s = to_json(&g);
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), &s[..s.len() / 2]).unwrap();
        assert!(matches!(import_graph(f.path()), Err(GraphIoError::Corrupt(_))));
    }

    #[test]
    fn version_mismatch() {
        let s = to_json(&sample()).replacen("\"version\":1", "\"version\":99", 1);
        assert!(matches!(from_json(&s), Err(GraphIoError::Version { found: 99, .. })));
    }
}
