//! Bucketed per-feature histograms for long flows.

use std::collections::BTreeMap;

use crate::flow_table::FlowRecord;

use super::LongEdge;

pub const LENGTH_BUCKET: f64 = 10.0;
pub const INTERVAL_BUCKET: f64 = 0.001;
pub const PROTO_BUCKET: f64 = 1.0;
const MAX_CODE: u32 = i32::MAX as u32;

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bucket_width: f64,
    /// Bucket code to count; empty buckets are absent.
    pub bins: BTreeMap<u32, u32>,
}

impl Histogram {
    pub fn new(bucket_width: f64) -> Self {
        Histogram { bucket_width, bins: BTreeMap::new() }
    }

    pub fn add(&mut self, code: u32) {
        *self.bins.entry(code).or_insert(0) += 1;
    }

    pub fn total(&self) -> u64 {
        self.bins.values().map(|&c| c as u64).sum()
    }

    /// Fullest bucket as (code, count); ties go to the lowest code.
    pub fn max_bin(&self) -> Option<(u32, u32)> {
        self.bins.iter().fold(None, |best, (&code, &count)| match best {
            Some((_, c)) if c >= count => best,
            _ => Some((code, count)),
        })
    }
}

pub fn length_code(len: u32) -> u32 {
    len / 10
}

/// Millisecond bucket of an interval. Computed as a product so exact
/// millisecond values do not fall into the bucket below.
pub fn interval_code(interval: f64) -> u32 {
    let ms = (interval * 1000.0).floor();
    if ms <= 0.0 {
        0
    } else if ms >= MAX_CODE as f64 {
        MAX_CODE
    } else {
        ms as u32
    }
}

pub fn fit_long(flow: &FlowRecord) -> LongEdge {
    let mut len_hist = Histogram::new(LENGTH_BUCKET);
    let mut interval_hist = Histogram::new(INTERVAL_BUCKET);
    let mut proto_hist = Histogram::new(PROTO_BUCKET);
    for f in &flow.features {
        len_hist.add(length_code(f.len));
        interval_hist.add(interval_code(f.interval));
        proto_hist.add(f.mask as u32);
    }
    LongEdge {
        key: flow.key,
        len_hist,
        interval_hist,
        proto_hist,
        fct: flow.last_ts - flow.first_ts,
        pkt_count: flow.features.len(),
        first_ts: flow.first_ts,
        last_ts: flow.last_ts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow_table::FlowKey;
    use crate::ingest::{L4Proto, PerPacketFeature, MASK_TCP};

    fn flow(lens: &[u32], intervals: &[f64]) -> FlowRecord {
        let features: Vec<_> = lens
            .iter()
            .zip(intervals)
            .map(|(&len, &interval)| PerPacketFeature { mask: MASK_TCP, len, interval })
            .collect();
        FlowRecord {
            key: FlowKey { src: "1.1.1.1".parse().unwrap(), dst: "2.2.2.2".parse().unwrap(), sport: 1, dport: 2 },
            first_ts: 5.0,
            last_ts: 5.0 + intervals.iter().sum::<f64>(),
            features,
            proto: L4Proto::Tcp,
        }
    }

    #[test]
    fn length_buckets() {
        let e = fit_long(&flow(&[100, 105, 109, 1500], &[0.0; 4]));
        assert_eq!(e.len_hist.bins, BTreeMap::from([(10, 3), (150, 1)]));
    }

    #[test]
    fn zero_intervals() {
        let e = fit_long(&flow(&[100; 4], &[0.0; 4]));
        assert_eq!(e.interval_hist.bins, BTreeMap::from([(0, 4)]));
    }

    #[test]
    fn conservation() {
        let e = fit_long(&flow(&[60; 16], &[0.0015; 16]));
        assert_eq!(e.len_hist.total(), 16);
        assert_eq!(e.interval_hist.total(), 16);
        assert_eq!(e.proto_hist.total(), 16);
        assert_eq!(e.pkt_count, 16);
        assert_eq!(e.proto_hist.bins, BTreeMap::from([(MASK_TCP as u32, 16)]));
    }

    #[test]
    fn interval_codes() {
        assert_eq!(interval_code(0.003), 3);
        assert_eq!(interval_code(0.0009), 0);
        assert_eq!(interval_code(1e12), i32::MAX as u32);
    }

    #[test]
    fn max_bin_prefers_lowest_code() {
        let mut h = Histogram::new(1.0);
        h.add(7);
        h.add(3);
        assert_eq!(h.max_bin(), Some((3, 1)));
        h.add(7);
        assert_eq!(h.max_bin(), Some((7, 2)));
    }
}
