//! Short-flow aggregation into graph edges.

use std::collections::BTreeMap;
use std::net::IpAddr;

use rustc_hash::FxHashMap;

use crate::flow_table::FlowRecord;

use super::{AggKind, ShortEdge, VertexKey};

/// Group short flows into edges. Within each protocol-mask partition, flows
/// sharing a source are aggregated first; the remainder are grouped by
/// destination; anything left becomes a one-flow edge.
pub fn aggregate_short(flows: &[FlowRecord], agg_line: usize) -> Vec<ShortEdge> {
    let mut partitions: BTreeMap<u16, Vec<usize>> = BTreeMap::new();
    for (i, f) in flows.iter().enumerate() {
        partitions.entry(f.mask()).or_default().push(i);
    }

    let mut edges = Vec::new();
    let mut consumed = vec![false; flows.len()];
    for (mask, members) in partitions {
        for group in groups_by(&members, flows, |f| f.key.src) {
            if group.len() > agg_line {
                let src = VertexKey::Single(flows[group[0]].key.src);
                let dst = VertexKey::from_addrs(group.iter().map(|&i| flows[i].key.dst).collect());
                let kind = if matches!(dst, VertexKey::Single(_)) { AggKind::BothAgg } else { AggKind::SrcAgg };
                edges.push(make_edge(flows, &group, src, dst, kind, mask));
                group.iter().for_each(|&i| consumed[i] = true);
            }
        }

        let rest: Vec<usize> = members.iter().copied().filter(|&i| !consumed[i]).collect();
        for group in groups_by(&rest, flows, |f| f.key.dst) {
            if group.len() > agg_line {
                let src = VertexKey::from_addrs(group.iter().map(|&i| flows[i].key.src).collect());
                let dst = VertexKey::Single(flows[group[0]].key.dst);
                edges.push(make_edge(flows, &group, src, dst, AggKind::DstAgg, mask));
                group.iter().for_each(|&i| consumed[i] = true);
            }
        }

        for &i in &rest {
            if consumed[i] {
                continue;
            }
            let f = &flows[i];
            let src = VertexKey::Single(f.key.src);
            let dst = VertexKey::Single(f.key.dst);
            edges.push(make_edge(flows, &[i], src, dst, AggKind::NoAgg, mask));
            consumed[i] = true;
        }
    }
    edges
}

/// Group indices by an address, keeping groups in order of first appearance
/// and members in input order.
fn groups_by(members: &[usize], flows: &[FlowRecord], addr: impl Fn(&FlowRecord) -> IpAddr) -> Vec<Vec<usize>> {
    let mut slot: FxHashMap<IpAddr, usize> = FxHashMap::default();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in members {
        let a = addr(&flows[i]);
        let g = *slot.entry(a).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    groups
}

fn make_edge(flows: &[FlowRecord], group: &[usize], src: VertexKey, dst: VertexKey, kind: AggKind, mask: u16) -> ShortEdge {
    let first = &flows[group[0]];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &i in group {
        lo = lo.min(flows[i].first_ts);
        hi = hi.max(flows[i].last_ts);
    }
    ShortEdge {
        src,
        dst,
        agg_kind: kind,
        features: first.features.clone(),
        members: group.iter().map(|&i| flows[i].key).collect(),
        flow_count: group.len(),
        first_ts: lo,
        last_ts: hi,
        protocol_mask: mask,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow_table::FlowKey;
    use crate::ingest::{L4Proto, PerPacketFeature, MASK_TCP, MASK_UDP};

    fn flow(src: &str, dst: &str, sport: u16, mask: u16) -> FlowRecord {
        FlowRecord {
            key: FlowKey { src: src.parse().unwrap(), dst: dst.parse().unwrap(), sport, dport: 22 },
            features: vec![PerPacketFeature { mask, len: 60, interval: 0.0 }],
            first_ts: sport as f64,
            last_ts: sport as f64,
            proto: L4Proto::Tcp,
        }
    }

    #[test]
    fn both_aggregated() {
        let flows: Vec<_> = (0..25).map(|i| flow("10.0.0.1", "10.0.0.2", i, MASK_TCP)).collect();
        let edges = aggregate_short(&flows, 20);
        assert_eq!(edges.len(), 1);
        assert_eq!(edges[0].agg_kind, AggKind::BothAgg);
        assert_eq!(edges[0].flow_count, 25);
        assert_eq!(edges[0].first_ts, 0.0);
        assert_eq!(edges[0].last_ts, 24.0);
    }

    #[test]
    fn source_aggregated_with_group_destination() {
        let flows: Vec<_> = (0..25).map(|i| flow("10.0.0.1", &format!("10.0.1.{i}"), i, MASK_TCP)).collect();
        let edges = aggregate_short(&flows, 20);
        assert_eq!(edges.len(), 1);
        assert_eq!(edges[0].agg_kind, AggKind::SrcAgg);
        assert_eq!(edges[0].dst.addrs().len(), 25);
    }

    #[test]
    fn destination_aggregated() {
        let flows: Vec<_> = (0..30).map(|i| flow(&format!("10.0.1.{i}"), "10.0.0.9", i, MASK_TCP)).collect();
        let edges = aggregate_short(&flows, 20);
        assert_eq!(edges.len(), 1);
        assert_eq!(edges[0].agg_kind, AggKind::DstAgg);
        assert_eq!(edges[0].src.addrs().len(), 30);
    }

    #[test]
    fn below_threshold() {
        let flows = vec![
            flow("10.0.0.1", "10.0.0.2", 1, MASK_TCP),
            flow("10.0.0.3", "10.0.0.4", 2, MASK_TCP),
            flow("10.0.0.5", "10.0.0.6", 3, MASK_UDP),
        ];
        let edges = aggregate_short(&flows, 20);
        assert_eq!(edges.len(), 3);
        assert!(edges.iter().all(|e| e.agg_kind == AggKind::NoAgg && e.flow_count == 1));
    }

    #[test]
    fn exactly_agg_line_is_not_aggregated() {
        let flows: Vec<_> = (0..20).map(|i| flow("10.0.0.1", "10.0.0.2", i, MASK_TCP)).collect();
        assert_eq!(aggregate_short(&flows, 20).len(), 20);
    }

    #[test]
    fn masks_partition() {
        let mut flows: Vec<_> = (0..21).map(|i| flow("10.0.0.1", "10.0.0.2", i, MASK_TCP)).collect();
        flows.extend((0..21).map(|i| flow("10.0.0.1", "10.0.0.2", 100 + i, MASK_UDP)));
        let edges = aggregate_short(&flows, 20);
        assert_eq!(edges.len(), 2);
        assert_ne!(edges[0].protocol_mask, edges[1].protocol_mask);
    }
}
