//! In-memory flow interaction graph. Vertices are single addresses or address
//! groups produced by aggregation; edges are aggregated short-flow groups or
//! individual long flows summarised by histograms.

mod aggregate;
mod histogram;
mod io;

use std::collections::HashMap;
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use crate::flow_table::{FlowKey, FlowRecord};
use crate::ingest::PerPacketFeature;

pub use aggregate::aggregate_short;
pub use histogram::{fit_long, interval_code, length_code, Histogram};
pub use io::{export_graph, from_json, import_graph, to_json, GraphIoError, GRAPH_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexKind {
    Single,
    Group,
}

/// Vertex identity: one address, or the sorted set of a group's addresses.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VertexKey {
    Single(IpAddr),
    Group(Vec<IpAddr>),
}

impl VertexKey {
    /// Build a key from a set of addresses; one distinct address yields a
    /// single-address vertex.
    pub fn from_addrs(mut addrs: Vec<IpAddr>) -> VertexKey {
        addrs.sort_unstable();
        addrs.dedup();
        if addrs.len() == 1 {
            VertexKey::Single(addrs[0])
        } else {
            VertexKey::Group(addrs)
        }
    }

    pub fn kind(&self) -> VertexKind {
        match self {
            VertexKey::Single(_) => VertexKind::Single,
            VertexKey::Group(_) => VertexKind::Group,
        }
    }

    pub fn addrs(&self) -> &[IpAddr] {
        match self {
            VertexKey::Single(a) => std::slice::from_ref(a),
            VertexKey::Group(v) => v,
        }
    }
}

impl std::fmt::Display for VertexKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VertexKey::Single(a) => write!(f, "{a}"),
            VertexKey::Group(v) => write!(f, "group[{}]:{}", v.len(), v[0]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vertex {
    pub id: usize,
    pub key: VertexKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AggKind {
    SrcAgg,
    DstAgg,
    BothAgg,
    NoAgg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShortEdge {
    pub src: VertexKey,
    pub dst: VertexKey,
    pub agg_kind: AggKind,
    /// Feature sequence of the group's first flow.
    pub features: Vec<PerPacketFeature>,
    pub members: Vec<FlowKey>,
    pub flow_count: usize,
    pub first_ts: f64,
    pub last_ts: f64,
    pub protocol_mask: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongEdge {
    pub key: FlowKey,
    pub len_hist: Histogram,
    pub interval_hist: Histogram,
    pub proto_hist: Histogram,
    pub fct: f64,
    pub pkt_count: usize,
    pub first_ts: f64,
    pub last_ts: f64,
}

impl LongEdge {
    pub fn src(&self) -> VertexKey {
        VertexKey::Single(self.key.src)
    }

    pub fn dst(&self) -> VertexKey {
        VertexKey::Single(self.key.dst)
    }

    pub fn protocol_mask(&self) -> u16 {
        self.proto_hist.bins.keys().fold(0u16, |m, &c| m | c as u16)
    }
}

/// Reference to an edge of either kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeRef {
    Short(usize),
    Long(usize),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InteractionGraph {
    vertices: Vec<Vertex>,
    index: HashMap<VertexKey, usize>,
    short_edges: Vec<ShortEdge>,
    long_edges: Vec<LongEdge>,
    short_ends: Vec<(usize, usize)>,
    long_ends: Vec<(usize, usize)>,
    in_deg: Vec<u32>,
    out_deg: Vec<u32>,
}

impl InteractionGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build a graph from one batch of classified flows.
    pub fn from_flows(short: &[FlowRecord], long: &[FlowRecord], agg_line: usize) -> Self {
        let mut g = InteractionGraph::new();
        g.add_edges(aggregate_short(short, agg_line), long.iter().map(fit_long).collect());
        g
    }

    fn vertex_id(&mut self, key: &VertexKey) -> usize {
        if let Some(&id) = self.index.get(key) {
            return id;
        }
        let id = self.vertices.len();
        self.vertices.push(Vertex { id, key: key.clone() });
        self.index.insert(key.clone(), id);
        self.in_deg.push(0);
        self.out_deg.push(0);
        id
    }

    fn link(&mut self, src: &VertexKey, dst: &VertexKey) -> (usize, usize) {
        let s = self.vertex_id(src);
        let d = self.vertex_id(dst);
        self.out_deg[s] += 1;
        self.in_deg[d] += 1;
        (s, d)
    }

    pub fn add_edges(&mut self, short: Vec<ShortEdge>, long: Vec<LongEdge>) {
        for e in short {
            let ends = self.link(&e.src, &e.dst);
            self.short_ends.push(ends);
            self.short_edges.push(e);
        }
        for e in long {
            let ends = self.link(&e.src(), &e.dst());
            self.long_ends.push(ends);
            self.long_edges.push(e);
        }
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, key: &VertexKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn short_edges(&self) -> &[ShortEdge] {
        &self.short_edges
    }

    pub fn long_edges(&self) -> &[LongEdge] {
        &self.long_edges
    }

    pub fn edge_count(&self) -> usize {
        self.short_edges.len() + self.long_edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty() && self.edge_count() == 0
    }

    /// (source vertex id, destination vertex id) of an edge.
    pub fn endpoints(&self, e: EdgeRef) -> (usize, usize) {
        match e {
            EdgeRef::Short(i) => self.short_ends[i],
            EdgeRef::Long(i) => self.long_ends[i],
        }
    }

    pub fn edge_refs(&self) -> impl Iterator<Item = EdgeRef> + '_ {
        (0..self.short_edges.len()).map(EdgeRef::Short).chain((0..self.long_edges.len()).map(EdgeRef::Long))
    }

    pub fn first_ts(&self, e: EdgeRef) -> f64 {
        match e {
            EdgeRef::Short(i) => self.short_edges[i].first_ts,
            EdgeRef::Long(i) => self.long_edges[i].first_ts,
        }
    }

    pub fn last_ts(&self, e: EdgeRef) -> f64 {
        match e {
            EdgeRef::Short(i) => self.short_edges[i].last_ts,
            EdgeRef::Long(i) => self.long_edges[i].last_ts,
        }
    }

    pub fn in_degree(&self, v: usize) -> u32 {
        self.in_deg[v]
    }

    pub fn out_degree(&self, v: usize) -> u32 {
        self.out_deg[v]
    }

    /// Degrees recomputed from the edge lists.
    pub fn recount_degrees(&self) -> (Vec<u32>, Vec<u32>) {
        let mut ind = vec![0u32; self.vertices.len()];
        let mut outd = vec![0u32; self.vertices.len()];
        for &(s, d) in self.short_ends.iter().chain(&self.long_ends) {
            outd[s] += 1;
            ind[d] += 1;
        }
        (ind, outd)
    }

    /// Rebuild a graph from already-numbered parts.
    pub(crate) fn from_parts(
        vertices: Vec<Vertex>,
        short: Vec<(usize, usize, ShortEdge)>,
        long: Vec<(usize, usize, LongEdge)>,
    ) -> Self {
        let mut g = InteractionGraph::new();
        for v in vertices {
            g.index.insert(v.key.clone(), v.id);
            g.vertices.push(v);
        }
        g.in_deg = vec![0; g.vertices.len()];
        g.out_deg = vec![0; g.vertices.len()];
        for (s, d, e) in short {
            g.out_deg[s] += 1;
            g.in_deg[d] += 1;
            g.short_ends.push((s, d));
            g.short_edges.push(e);
        }
        for (s, d, e) in long {
            g.out_deg[s] += 1;
            g.in_deg[d] += 1;
            g.long_ends.push((s, d));
            g.long_edges.push(e);
        }
        g
    }
}
