//! Detection over one window's graph: filter ordinary components, pre-cluster
//! the rest, pick critical vertices by vertex cover, cluster each vertex's
//! edges and score every edge by its clustering loss.

mod cover;
mod features;
mod loss;

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::graph::{EdgeRef, InteractionGraph};
use crate::mlcore::{kmeans, minmax_normalize, DbscanParams, FeatureMatrix};
use crate::preprocess::{component_stats, components, filter_components, pre_cluster, Component, PreCluster};

pub use cover::{edges_by_vertex, is_cover, vertex_cover, MAX_EXACT_VERTICES};
pub use features::{edge_full_features, LONG_DIM, SHORT_DIM};
pub use loss::{edge_loss, LossParts, LossWeights};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectConfig {
    pub dbscan: DbscanParams,
    pub k: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub exact_vc_cutoff: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig { dbscan: DbscanParams::default(), k: 10, seed: 0, weights: LossWeights::default(), exact_vc_cutoff: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdict {
    pub edge: EdgeRef,
    /// Negative infinity for edges in ordinary components.
    pub loss: f64,
    pub loss_center: f64,
    pub loss_cluster: f64,
    pub loss_count: f64,
    pub malicious: bool,
    /// Critical vertex whose clustering produced the loss.
    pub vertex: Option<usize>,
}

impl Verdict {
    fn benign(edge: EdgeRef) -> Self {
        Verdict {
            edge,
            loss: f64::NEG_INFINITY,
            loss_center: 0.0,
            loss_cluster: 0.0,
            loss_count: 0.0,
            malicious: false,
            vertex: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectStats {
    pub components: usize,
    pub abnormal_components: usize,
    pub pre_clusters: usize,
    pub critical_vertices: usize,
    /// Component analysis and filtering.
    pub preprocess_time: Duration,
    /// Pre-clustering, vertex cover, clustering and scoring.
    pub detect_time: Duration,
}

/// Verdicts for every edge, short edges first, each list in edge order.
pub fn detect(g: &InteractionGraph, cfg: &DetectConfig) -> Vec<Verdict> {
    detect_with_stats(g, cfg).0
}

pub fn detect_with_stats(g: &InteractionGraph, cfg: &DetectConfig) -> (Vec<Verdict>, DetectStats) {
    let mut verdicts: Vec<Verdict> = g.edge_refs().map(Verdict::benign).collect();
    let mut stats = DetectStats::default();
    if g.edge_count() == 0 {
        return (verdicts, stats);
    }
    let t0 = Instant::now();
    let comps = components(g);
    let comp_stats: Vec<_> = comps.iter().map(|c| component_stats(c, g)).collect();
    let filter = filter_components(&comp_stats, cfg.dbscan);
    stats.components = comps.len();
    stats.abnormal_components = filter.abnormal.len();
    let t1 = Instant::now();
    stats.preprocess_time = t1 - t0;

    let scored: Vec<(Vec<Verdict>, usize, usize)> =
        filter.abnormal.par_iter().map(|&ci| score_component(&comps[ci], g, cfg)).collect();
    let n_short = g.short_edges().len();
    for (vs, pcs, crit) in scored {
        stats.pre_clusters += pcs;
        stats.critical_vertices += crit;
        for v in vs {
            let slot = match v.edge {
                EdgeRef::Short(i) => i,
                EdgeRef::Long(i) => n_short + i,
            };
            verdicts[slot] = v;
        }
    }
    stats.detect_time = t1.elapsed();
    (verdicts, stats)
}

fn flows_denoted(pc: &PreCluster, g: &InteractionGraph) -> u64 {
    pc.members
        .iter()
        .map(|&e| match e {
            EdgeRef::Short(i) => g.short_edges()[i].flow_count as u64,
            EdgeRef::Long(_) => 1,
        })
        .sum()
}

/// Score one abnormal component. Returns the verdicts of its edges, the
/// number of pre-clusters and the number of critical vertices.
fn score_component(c: &Component, g: &InteractionGraph, cfg: &DetectConfig) -> (Vec<Verdict>, usize, usize) {
    let short: Vec<EdgeRef> = c.short_edges.iter().map(|&i| EdgeRef::Short(i)).collect();
    let long: Vec<EdgeRef> = c.long_edges.iter().map(|&i| EdgeRef::Long(i)).collect();
    let mut pcs = pre_cluster(&short, g, cfg.dbscan);
    pcs.extend(pre_cluster(&long, g, cfg.dbscan));

    let centers: Vec<EdgeRef> = pcs.iter().map(|p| p.center).collect();
    let ends: Vec<(usize, usize)> = centers.iter().map(|&e| g.endpoints(e)).collect();
    let cover = vertex_cover(&ends, cfg.exact_vc_cutoff);
    let mut best: Vec<Option<Verdict>> = vec![None; pcs.len()];

    for (vertex, idx) in edges_by_vertex(&ends, &cover) {
        for want_short in [true, false] {
            let group: Vec<usize> = idx.iter().copied().filter(|&i| matches!(centers[i], EdgeRef::Short(_)) == want_short).collect();
            if group.is_empty() {
                continue;
            }
            let rows: Vec<Vec<f64>> = group.iter().map(|&i| edge_full_features(centers[i], g)).collect();
            let m = minmax_normalize(&FeatureMatrix::from_rows(rows[0].len(), &rows).expect("features are finite"));
            let model = kmeans(&m, cfg.k, cfg.seed);
            for (row, &i) in group.iter().enumerate() {
                let parts = edge_loss(model.nearest_distance(m.row(row)), pcs[i].time_range, flows_denoted(&pcs[i], g), &cfg.weights);
                if best[i].is_none_or(|b| parts.loss > b.loss) {
                    best[i] = Some(Verdict {
                        edge: centers[i],
                        loss: parts.loss,
                        loss_center: parts.center,
                        loss_cluster: parts.cluster,
                        loss_count: parts.count,
                        malicious: parts.is_malicious(&cfg.weights),
                        vertex: Some(vertex),
                    });
                }
            }
        }
    }

    let mut out = Vec::with_capacity(c.edge_count());
    for (pc, v) in pcs.iter().zip(best) {
        let v = v.expect("every center edge touches the cover");
        out.extend(pc.members.iter().map(|&edge| Verdict { edge, ..v }));
    }
    (out, pcs.len(), cover.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow_table::{FlowKey, FlowRecord};
    use crate::ingest::{L4Proto, PerPacketFeature, MASK_TCP, MASK_UDP};
    use std::net::{IpAddr, Ipv4Addr};

    fn ip(i: u32) -> IpAddr {
        IpAddr::V4(Ipv4Addr::from(0x0a00_0000 + i))
    }

    fn short(src: u32, dst: u32, sport: u16, ts: f64, mask: u16) -> FlowRecord {
        FlowRecord {
            key: FlowKey { src: ip(src), dst: ip(dst), sport, dport: 53 },
            features: vec![PerPacketFeature { mask, len: 80, interval: 0.0 }, PerPacketFeature { mask, len: 120, interval: 0.01 }],
            first_ts: ts,
            last_ts: ts + 0.01,
            proto: L4Proto::Udp,
        }
    }

    /// Many small benign exchanges plus one burst of 300 flows from a single
    /// source to distinct hosts within two seconds.
    fn burst_graph() -> InteractionGraph {
        let mut flows = Vec::new();
        for i in 0..600u32 {
            flows.push(short(10_000 + 2 * i, 10_001 + 2 * i, 40000, i as f64 * 0.05, MASK_UDP));
        }
        for i in 0..300u32 {
            flows.push(short(1, 50_000 + i, 1000 + i as u16, 5.0 + i as f64 / 150.0, MASK_TCP));
        }
        InteractionGraph::from_flows(&flows, &[], 20)
    }

    #[test]
    fn empty_graph() {
        assert!(detect(&InteractionGraph::new(), &DetectConfig::default()).is_empty());
    }

    #[test]
    fn burst_is_flagged() {
        let g = burst_graph();
        let (v, stats) = detect_with_stats(&g, &DetectConfig::default());
        assert_eq!(v.len(), g.edge_count());
        let burst = g.short_edges().iter().position(|e| e.flow_count == 300).unwrap();
        assert!(v[burst].malicious, "{:?}", v[burst]);
        assert_eq!(v.iter().filter(|x| x.malicious).count(), 1);
        assert_eq!(stats.abnormal_components, 1);
    }

    #[test]
    fn single_benign_component() {
        let flows: Vec<_> = (0..5).map(|i| short(1, 2 + i, 100 + i as u16, i as f64, MASK_UDP)).collect();
        let g = InteractionGraph::from_flows(&flows, &[], 20);
        assert!(detect(&g, &DetectConfig::default()).iter().all(|v| !v.malicious));
    }

    #[test]
    fn deterministic() {
        let g = burst_graph();
        let cfg = DetectConfig { seed: 11, ..Default::default() };
        let a = detect(&g, &cfg);
        let b = detect(&g, &cfg);
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn pre_cluster_members_share_verdict() {
        // 60 identical flows on one hub form a dense pre-cluster
        let mut flows = Vec::new();
        for i in 0..60u32 {
            flows.push(short(7, 100 + i, 2000, 1.0, MASK_UDP));
            flows.push(short(500 + i, 900 + i, 2000, 1.0, MASK_TCP));
        }
        let g = InteractionGraph::from_flows(&flows, &[], 100);
        let cfg = DetectConfig { dbscan: DbscanParams { eps: 0.01, min_points: 2 }, ..Default::default() };
        let comps = components(&g);
        let hub = comps.iter().find(|c| c.short_edges.len() == 60).unwrap();
        let (vs, pcs, _) = score_component(hub, &g, &cfg);
        assert_eq!(pcs, 1);
        assert!(vs.iter().all(|v| v.loss == vs[0].loss && v.vertex == vs[0].vertex));
    }

    fn outlier_rows() -> FeatureMatrix {
        let mut rows: Vec<Vec<f64>> = vec![vec![1.0, 2.0, 3.0]; 100];
        rows.push(vec![9.0, 0.0, 7.0]);
        minmax_normalize(&FeatureMatrix::from_rows(3, &rows).unwrap())
    }

    #[test]
    fn outlier_captures_a_center_when_k_exceeds_distinct_rows() {
        // seeding always picks a row at positive distance, so the lone
        // distinct row becomes its own center
        let m = outlier_rows();
        let model = kmeans(&m, 10, 0);
        assert!(m.iter_rows().all(|r| model.nearest_distance(r) == 0.0));
    }

    #[test]
    fn outlier_is_farthest_from_a_single_center() {
        let m = outlier_rows();
        let model = kmeans(&m, 1, 0);
        let d: Vec<f64> = m.iter_rows().map(|r| model.nearest_distance(r)).collect();
        // reference: one center at the column means
        let mean: Vec<f64> = (0..3).map(|j| m.column(j).sum::<f64>() / 101.0).collect();
        for (i, r) in m.iter_rows().enumerate() {
            assert!((d[i] - crate::mlcore::dist(r, &mean)).abs() < 1e-12);
        }
        assert!(d[..100].iter().all(|&x| x < d[100]));
    }
}
