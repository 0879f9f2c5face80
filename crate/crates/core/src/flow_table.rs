//! Keyed flow table driven by trace time: packets are appended to their
//! directional 4-tuple entry, idle entries are evicted on periodic sweeps and
//! classified as short or long by packet count.

use std::hash::{BuildHasher, Hash};
use std::net::IpAddr;

use rayon::prelude::*;
use rustc_hash::{FxBuildHasher, FxHashMap};
use serde::{Deserialize, Serialize};

use crate::ingest::{featurize, L4Proto, PacketRecord, PerPacketFeature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub src: IpAddr,
    pub dst: IpAddr,
    pub sport: u16,
    pub dport: u16,
}

impl FlowKey {
    pub fn of(pkt: &PacketRecord) -> FlowKey {
        FlowKey { src: pkt.src, dst: pkt.dst, sport: pkt.sport, dport: pkt.dport }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    pub key: FlowKey,
    pub features: Vec<PerPacketFeature>,
    /// Timestamp of the first packet.
    pub first_ts: f64,
    /// Latest timestamp seen on the flow.
    pub last_ts: f64,
    pub proto: L4Proto,
}

impl FlowRecord {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// OR of the per-packet protocol masks.
    pub fn mask(&self) -> u16 {
        self.features.iter().fold(0, |m, f| m | f.mask)
    }

    pub fn bytes(&self) -> u64 {
        self.features.iter().map(|f| f.len as u64).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowTableConfig {
    pub judge_interval: f64,
    pub pkt_timeout: f64,
    pub flow_line: usize,
}

impl Default for FlowTableConfig {
    fn default() -> Self {
        FlowTableConfig { judge_interval: 1.0, pkt_timeout: 10.0, flow_line: 15 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowClass {
    Short,
    Long,
}

pub fn classify(flow: &FlowRecord, flow_line: usize) -> FlowClass {
    if flow.len() > flow_line {
        FlowClass::Long
    } else {
        FlowClass::Short
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Completed {
    pub short: Vec<FlowRecord>,
    pub long: Vec<FlowRecord>,
}

impl Completed {
    pub fn is_empty(&self) -> bool {
        self.short.is_empty() && self.long.is_empty()
    }

    pub fn extend(&mut self, other: Completed) {
        self.short.extend(other.short);
        self.long.extend(other.long);
    }

    fn from_flows(mut flows: Vec<FlowRecord>, flow_line: usize) -> Completed {
        sort_flows(&mut flows);
        let (long, short) = flows.into_iter().partition(|f| classify(f, flow_line) == FlowClass::Long);
        Completed { short, long }
    }
}

/// Canonical emission order: first packet time, then key.
pub fn sort_flows(flows: &mut [FlowRecord]) {
    flows.sort_by(|a, b| a.first_ts.total_cmp(&b.first_ts).then_with(|| a.key.cmp(&b.key)));
}

const DEFAULT_SHARDS: usize = 16;

pub struct FlowTable {
    cfg: FlowTableConfig,
    shards: Vec<FxHashMap<FlowKey, FlowRecord>>,
    hasher: FxBuildHasher,
    clock: Option<f64>,
    last_check: f64,
}

impl FlowTable {
    pub fn new(cfg: FlowTableConfig) -> Self {
        Self::with_shards(cfg, DEFAULT_SHARDS)
    }

    pub fn with_shards(cfg: FlowTableConfig, shards: usize) -> Self {
        let shards = shards.max(1);
        FlowTable {
            cfg,
            shards: (0..shards).map(|_| FxHashMap::default()).collect(),
            hasher: FxBuildHasher,
            clock: None,
            last_check: 0.0,
        }
    }

    pub fn config(&self) -> &FlowTableConfig {
        &self.cfg
    }

    pub fn clock(&self) -> Option<f64> {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.shards.iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.shards.iter().all(|s| s.is_empty())
    }

    fn shard_of(&self, key: &FlowKey) -> usize {
        let mut h = self.hasher.build_hasher();
        key.hash(&mut h);
        (std::hash::Hasher::finish(&h) % self.shards.len() as u64) as usize
    }

    /// Append a packet to its flow, creating the entry if needed, and advance
    /// the table clock.
    pub fn insert_packet(&mut self, pkt: &PacketRecord) {
        let key = FlowKey::of(pkt);
        let shard = self.shard_of(&key);
        match self.shards[shard].get_mut(&key) {
            Some(flow) => {
                flow.features.push(featurize(pkt, Some(flow.last_ts)));
                flow.last_ts = flow.last_ts.max(pkt.ts);
            }
            None => {
                let flow = FlowRecord {
                    key,
                    features: vec![featurize(pkt, None)],
                    first_ts: pkt.ts,
                    last_ts: pkt.ts,
                    proto: pkt.proto,
                };
                self.shards[shard].insert(key, flow);
            }
        }
        match self.clock {
            None => {
                self.clock = Some(pkt.ts);
                self.last_check = pkt.ts;
            }
            Some(c) if pkt.ts > c => self.clock = Some(pkt.ts),
            Some(_) => {}
        }
    }

    /// Evict every flow idle for longer than the packet timeout at `now`.
    pub fn sweep(&mut self, now: f64) -> Completed {
        let timeout = self.cfg.pkt_timeout;
        let evicted: Vec<FlowRecord> = self
            .shards
            .par_iter_mut()
            .flat_map_iter(|shard| shard.extract_if(|_, f| now - f.last_ts > timeout).map(|(_, f)| f).collect::<Vec<_>>())
            .collect();
        Completed::from_flows(evicted, self.cfg.flow_line)
    }

    /// Insert a packet and run a sweep whenever more than `judge_interval`
    /// of trace time has passed since the previous one.
    pub fn push(&mut self, pkt: &PacketRecord) -> Option<Completed> {
        self.insert_packet(pkt);
        let now = self.clock?;
        if now - self.last_check > self.cfg.judge_interval {
            self.last_check = now;
            Some(self.sweep(now))
        } else {
            None
        }
    }

    /// Drain every remaining entry.
    pub fn flush(&mut self) -> Completed {
        let flows: Vec<FlowRecord> = self.shards.iter_mut().flat_map(|s| s.drain().map(|(_, f)| f)).collect();
        Completed::from_flows(flows, self.cfg.flow_line)
    }
}
