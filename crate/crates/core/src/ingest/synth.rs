//! Deterministic synthetic traces: a benign web background plus one attack
//! pattern per scenario, with a per-flow ground-truth sidecar.
//!
//! Timestamps are whole microseconds so the CSV and PCAP renderings of a
//! trace decode to identical `f64` values.

use std::collections::{BinaryHeap, HashMap};
use std::cmp::Reverse;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::{IpAddr, Ipv4Addr};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{IngestError, L4Proto, PacketRecord, FLAG_ACK, FLAG_FIN, FLAG_PSH, FLAG_SYN};
use crate::flow_table::FlowKey;

pub const BENIGN: &str = "benign";
pub const BASE_US: u64 = 1_700_000_000_000_000;
/// Span of the background traffic, kept inside one default analysis window.
const SPAN_US: u64 = 40_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    BenignWeb,
    BruteScan,
    SpoofFlood,
    SshCrack,
    LowrateProbe,
    BotnetC2,
    ObfuscatedCrack,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::BenignWeb,
        Scenario::BruteScan,
        Scenario::SpoofFlood,
        Scenario::SshCrack,
        Scenario::LowrateProbe,
        Scenario::BotnetC2,
        Scenario::ObfuscatedCrack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::BenignWeb => "benign-web",
            Scenario::BruteScan => "brute-scan",
            Scenario::SpoofFlood => "spoof-flood",
            Scenario::SshCrack => "ssh-crack",
            Scenario::LowrateProbe => "lowrate-probe",
            Scenario::BotnetC2 => "botnet-c2",
            Scenario::ObfuscatedCrack => "obfuscated-crack",
        }
    }

    fn index(self) -> u64 {
        Scenario::ALL.iter().position(|s| *s == self).unwrap() as u64
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = IngestError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .iter()
            .copied()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| IngestError::UnknownScenario(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRow {
    pub key: FlowKey,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTrace {
    pub packets: Vec<PacketRecord>,
    pub labels: Vec<LabelRow>,
}

impl SyntheticTrace {
    pub fn label_map(&self) -> HashMap<FlowKey, bool> {
        self.labels.iter().map(|r| (r.key, r.label != BENIGN)).collect()
    }
}

pub fn gen_synthetic(scenario: Scenario, seed: u64) -> SyntheticTrace {
    let mix = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ scenario.index().wrapping_mul(0xd1b5_4a32_d192_ed03);
    let mut g = Gen::new(mix);
    g.benign_web();
    let label = scenario.name();
    match scenario {
        Scenario::BenignWeb => {}
        Scenario::BruteScan => g.brute_scan(label),
        Scenario::SpoofFlood => g.spoof_flood(label),
        Scenario::SshCrack => {
            g.ssh_crack(label);
        }
        Scenario::LowrateProbe => g.lowrate_probe(label),
        Scenario::BotnetC2 => g.botnet_c2(label),
        Scenario::ObfuscatedCrack => {
            let attacker = g.ssh_crack(label);
            g.inject_benign(attacker);
        }
    }
    g.finish()
}

pub fn write_sidecar(path: impl AsRef<Path>, labels: &[LabelRow]) -> Result<(), IngestError> {
    let path = path.as_ref();
    let io_err = |source| IngestError::Io { path: path.display().to_string(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    writeln!(w, "src,dst,sport,dport,label").map_err(io_err)?;
    for r in labels {
        writeln!(w, "{},{},{},{},{}", r.key.src, r.key.dst, r.key.sport, r.key.dport, r.label).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_sidecar(path: impl AsRef<Path>) -> Result<Vec<LabelRow>, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    let mut rdr = ::csv::Reader::from_reader(std::io::BufReader::new(file));
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i as u64 + 2;
        let rec = rec.map_err(|e| IngestError::Row { row, msg: e.to_string() })?;
        let bad = |what: &str| IngestError::Row { row, msg: format!("bad {what}") };
        if rec.len() != 5 {
            return Err(bad("field count"));
        }
        let key = FlowKey {
            src: rec[0].parse().map_err(|_| bad("src"))?,
            dst: rec[1].parse().map_err(|_| bad("dst"))?,
            sport: rec[2].parse().map_err(|_| bad("sport"))?,
            dport: rec[3].parse().map_err(|_| bad("dport"))?,
        };
        out.push(LabelRow { key, label: rec[4].to_string() });
    }
    Ok(out)
}

fn v4(base: [u8; 4], offset: u32) -> IpAddr {
    IpAddr::V4(Ipv4Addr::from(u32::from_be_bytes(base).wrapping_add(offset)))
}

#[derive(Clone, Copy)]
struct PktSpec {
    flags: u8,
    len: u32,
}

fn tcp(flags: u8, len: u32) -> PktSpec {
    PktSpec { flags, len }
}

struct Gen {
    rng: ChaCha8Rng,
    events: Vec<(u64, u64, PacketRecord)>,
    labels: Vec<LabelRow>,
    seq: u64,
    next_port: HashMap<IpAddr, u16>,
}

impl Gen {
    fn new(seed: u64) -> Self {
        Gen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            events: Vec::new(),
            labels: Vec::new(),
            seq: 0,
            next_port: HashMap::new(),
        }
    }

    fn ephemeral(&mut self, host: IpAddr) -> u16 {
        let p = self.next_port.entry(host).or_insert(32_768);
        let out = *p;
        *p = if *p == u16::MAX { 32_768 } else { *p + 1 };
        out
    }

    /// Emit one flow starting at `start_us` with gaps drawn from `gap_us`.
    #[allow(clippy::too_many_arguments)]
    fn flow(
        &mut self,
        key: FlowKey,
        proto: L4Proto,
        start_us: u64,
        pkts: &[PktSpec],
        gap_us: (u64, u64),
        label: &str,
    ) -> u64 {
        let mut t = start_us;
        for (i, spec) in pkts.iter().enumerate() {
            if i > 0 {
                t += self.rng.random_range(gap_us.0..=gap_us.1);
            }
            let pkt = PacketRecord {
                ts: 0.0,
                src: key.src,
                dst: key.dst,
                sport: key.sport,
                dport: key.dport,
                proto,
                flags: if proto == L4Proto::Tcp { spec.flags } else { 0 },
                len: spec.len,
            };
            self.events.push((t, self.seq, pkt));
            self.seq += 1;
        }
        self.labels.push(LabelRow { key, label: label.to_string() });
        t
    }

    fn request_pkts(&mut self, data: usize, lens: (u32, u32)) -> Vec<PktSpec> {
        let mut v = vec![tcp(FLAG_SYN, 60), tcp(FLAG_ACK, 52)];
        for _ in 0..data {
            v.push(tcp(FLAG_PSH | FLAG_ACK, self.rng.random_range(lens.0..=lens.1)));
        }
        v.push(tcp(FLAG_FIN | FLAG_ACK, 52));
        v
    }

    fn response_pkts(&mut self, data: usize, lens: (u32, u32)) -> Vec<PktSpec> {
        let mut v = vec![tcp(FLAG_SYN | FLAG_ACK, 60)];
        for _ in 0..data {
            v.push(tcp(FLAG_PSH | FLAG_ACK, self.rng.random_range(lens.0..=lens.1)));
        }
        v.push(tcp(FLAG_FIN | FLAG_ACK, 52));
        v
    }

    /// A TCP request/response exchange between `client` and `server:port`.
    #[allow(clippy::too_many_arguments)]
    fn tcp_session(
        &mut self,
        client: IpAddr,
        server: IpAddr,
        port: u16,
        start_us: u64,
        req_data: usize,
        resp_data: usize,
        resp_lens: (u32, u32),
        label: &str,
    ) {
        let cport = self.ephemeral(client);
        let req = self.request_pkts(req_data, (120, 600));
        let resp = self.response_pkts(resp_data, resp_lens);
        let req_key = FlowKey { src: client, dst: server, sport: cport, dport: port };
        let resp_key = FlowKey { src: server, dst: client, sport: port, dport: cport };
        self.flow(req_key, L4Proto::Tcp, start_us, &req, (500, 20_000), label);
        let rtt = self.rng.random_range(200..=15_000);
        self.flow(resp_key, L4Proto::Tcp, start_us + rtt, &resp, (200, 10_000), label);
    }

    fn benign_web(&mut self) {
        // Isolated peer pairs exchanging a handful of flows.
        let pairs = self.rng.random_range(1000..=1200u32);
        for i in 0..pairs {
            let a = v4([10, 1, 0, 0], i);
            let b = v4([10, 2, 0, 0], i);
            let flows = self.rng.random_range(1..=3);
            for _ in 0..flows {
                let start = self.rng.random_range(0..SPAN_US);
                if self.rng.random_bool(0.5) {
                    let sport = self.ephemeral(a);
                    let q = [PktSpec { flags: 0, len: self.rng.random_range(60..=90) }];
                    let r = [PktSpec { flags: 0, len: self.rng.random_range(90..=400) }];
                    self.flow(FlowKey { src: a, dst: b, sport, dport: 53 }, L4Proto::Udp, start, &q, (0, 0), BENIGN);
                    let rtt = self.rng.random_range(500..=30_000);
                    self.flow(
                        FlowKey { src: b, dst: a, sport: 53, dport: sport },
                        L4Proto::Udp,
                        start + rtt,
                        &r,
                        (0, 0),
                        BENIGN,
                    );
                } else {
                    let req = self.rng.random_range(1..=3);
                    let resp = self.rng.random_range(1..=4);
                    self.tcp_session(a, b, 8080, start, req, resp, (200, 1400), BENIGN);
                }
            }
        }

        // Web servers with a shared client population.
        let servers: Vec<IpAddr> = (0..4).map(|i| v4([198, 51, 100, 10], i)).collect();
        let clients = self.rng.random_range(140..=160u32);
        for c in 0..clients {
            let client = v4([172, 16, 0, 10], c);
            let sessions = self.rng.random_range(2..=6);
            for _ in 0..sessions {
                let server = servers[self.rng.random_range(0..servers.len())];
                let start = self.rng.random_range(0..SPAN_US);
                let req = self.rng.random_range(1..=4);
                let resp = if self.rng.random_bool(0.2) {
                    self.rng.random_range(20..=60)
                } else {
                    self.rng.random_range(1..=8)
                };
                self.tcp_session(client, server, 443, start, req, resp, (900, 1500), BENIGN);
            }
        }
    }

    fn burst_start(&mut self) -> u64 {
        self.rng.random_range(5_000_000..=30_000_000)
    }

    fn ssh_crack(&mut self, label: &str) -> IpAddr {
        let attacker = v4([203, 0, 113, 10], self.rng.random_range(0..100));
        let n_servers = self.rng.random_range(240..=260u32);
        let servers: Vec<IpAddr> = (0..n_servers).map(|i| v4([100, 64, 0, 1], i * 3)).collect();
        let attempts = self.rng.random_range(380..=420usize);
        let start = self.burst_start();
        for i in 0..attempts {
            let server = if i < servers.len() { servers[i] } else { servers[self.rng.random_range(0..servers.len())] };
            let t = start + self.rng.random_range(0..3_000_000);
            let req = self.rng.random_range(2..=5);
            let resp = self.rng.random_range(1..=4);
            self.tcp_session(attacker, server, 22, t, req, resp, (80, 400), label);
        }
        attacker
    }

    /// Benign traffic sourced from the attacker: long TLS downloads, UDP video
    /// streams and ICMP echoes spread over the whole trace.
    fn inject_benign(&mut self, attacker: IpAddr) {
        let servers: Vec<IpAddr> = (0..4).map(|i| v4([198, 51, 100, 10], i)).collect();
        for _ in 0..self.rng.random_range(12..=18) {
            let server = servers[self.rng.random_range(0..servers.len())];
            let start = self.rng.random_range(0..SPAN_US);
            let cport = self.ephemeral(attacker);
            let n = self.rng.random_range(20..=50);
            let mut up = vec![tcp(FLAG_SYN, 60), tcp(FLAG_ACK, 52), tcp(FLAG_PSH | FLAG_ACK, 517)];
            up.extend(std::iter::repeat_n(tcp(FLAG_ACK, 52), n));
            up.push(tcp(FLAG_FIN | FLAG_ACK, 52));
            let down = self.response_pkts(n, (1200, 1500));
            self.flow(FlowKey { src: attacker, dst: server, sport: cport, dport: 443 }, L4Proto::Tcp, start, &up, (1_000, 20_000), BENIGN);
            self.flow(FlowKey { src: server, dst: attacker, sport: 443, dport: cport }, L4Proto::Tcp, start + 5_000, &down, (1_000, 20_000), BENIGN);
        }
        for i in 0..self.rng.random_range(6..=10u32) {
            let media = v4([192, 0, 2, 100], i);
            let start = self.rng.random_range(0..SPAN_US);
            let cport = self.ephemeral(attacker);
            let req = [PktSpec { flags: 0, len: 120 }];
            self.flow(FlowKey { src: attacker, dst: media, sport: cport, dport: 5004 }, L4Proto::Udp, start, &req, (0, 0), BENIGN);
            let n = self.rng.random_range(40..=120);
            let stream: Vec<PktSpec> = (0..n).map(|_| PktSpec { flags: 0, len: self.rng.random_range(900..=1300) }).collect();
            self.flow(FlowKey { src: media, dst: attacker, sport: 5004, dport: cport }, L4Proto::Udp, start + 2_000, &stream, (5_000, 40_000), BENIGN);
        }
        for i in 0..self.rng.random_range(8..=12u32) {
            let host = v4([192, 0, 2, 200], i);
            let start = self.rng.random_range(0..SPAN_US);
            let pings: Vec<PktSpec> = (0..4).map(|_| PktSpec { flags: 0, len: 84 }).collect();
            self.flow(FlowKey { src: attacker, dst: host, sport: 0, dport: 0 }, L4Proto::Icmp, start, &pings, (900_000, 1_100_000), BENIGN);
            self.flow(FlowKey { src: host, dst: attacker, sport: 0, dport: 0 }, L4Proto::Icmp, start + 3_000, &pings, (900_000, 1_100_000), BENIGN);
        }
    }

    fn brute_scan(&mut self, label: &str) {
        let scanner = v4([203, 0, 113, 120], self.rng.random_range(0..50));
        let n = self.rng.random_range(2800..=3200u32);
        let mut targets: Vec<u32> = (0..n * 4).collect();
        targets.shuffle(&mut self.rng);
        let ports = [22u16, 23, 80, 443, 445, 3389, 8080];
        let start = self.burst_start();
        for &t in targets.iter().take(n as usize) {
            let dst = v4([100, 96, 0, 0], t);
            let sport = self.ephemeral(scanner);
            let dport = ports[self.rng.random_range(0..ports.len())];
            let probes = if self.rng.random_bool(0.3) { 2 } else { 1 };
            let pkts = vec![tcp(FLAG_SYN, 60); probes];
            let t0 = start + self.rng.random_range(0..3_000_000);
            self.flow(FlowKey { src: scanner, dst, sport, dport }, L4Proto::Tcp, t0, &pkts, (200_000, 400_000), label);
        }
    }

    fn spoof_flood(&mut self, label: &str) {
        let victim = v4([192, 0, 2, 80], 0);
        let n = self.rng.random_range(1900..=2100u32);
        let start = self.burst_start();
        let mut seen = std::collections::HashSet::new();
        while (seen.len() as u32) < n {
            let off = self.rng.random_range(0..(1u32 << 24));
            if !seen.insert(off) {
                continue;
            }
            let src = v4([45, 0, 0, 0], off);
            let sport = self.rng.random_range(1024..=65_535);
            let syns = self.rng.random_range(1..=2);
            let t0 = start + self.rng.random_range(0..3_000_000);
            self.flow(FlowKey { src, dst: victim, sport, dport: 80 }, L4Proto::Tcp, t0, &vec![tcp(FLAG_SYN, 60); syns], (100_000, 300_000), label);
            let back = vec![tcp(FLAG_SYN | FLAG_ACK, 60); syns];
            self.flow(FlowKey { src: victim, dst: src, sport: 80, dport: sport }, L4Proto::Tcp, t0 + 300, &back, (100_000, 300_000), label);
        }
    }

    fn lowrate_probe(&mut self, label: &str) {
        let ports = [53u16, 123, 161, 1900];
        let start = self.burst_start();
        for s in 0..5u32 {
            let scanner = v4([203, 0, 113, 60], s);
            let mut pool: Vec<u32> = (0..4000).collect();
            pool.shuffle(&mut self.rng);
            let n = self.rng.random_range(190..=210);
            for &d in pool.iter().take(n) {
                let dst = v4([100, 112, 0, 0], d);
                let sport = self.ephemeral(scanner);
                let dport = ports[self.rng.random_range(0..ports.len())];
                let t0 = start + self.rng.random_range(0..3_000_000);
                let pkt = [PktSpec { flags: 0, len: self.rng.random_range(40..=80) }];
                self.flow(FlowKey { src: scanner, dst, sport, dport }, L4Proto::Udp, t0, &pkt, (0, 0), label);
            }
        }
    }

    fn botnet_c2(&mut self, label: &str) {
        let c2 = v4([198, 51, 100, 200], 0);
        let bots = self.rng.random_range(36..=44u32);
        let start = self.burst_start();
        for b in 0..bots {
            let bot = v4([100, 80, 0, 1], b * 5);
            for _ in 0..self.rng.random_range(7..=9) {
                let t0 = start + self.rng.random_range(0..3_000_000);
                let req = self.rng.random_range(1..=2);
                let resp = self.rng.random_range(1..=2);
                self.tcp_session(bot, c2, 443, t0, req, resp, (200, 700), label);
            }
        }
    }

    fn finish(mut self) -> SyntheticTrace {
        self.events.sort_by_key(|(t, seq, _)| (*t, *seq));
        let packets = self
            .events
            .into_iter()
            .map(|(t, _, mut p)| {
                p.ts = (BASE_US + t) as f64 / 1e6;
                p
            })
            .collect();
        SyntheticTrace { packets, labels: self.labels }
    }
}

/// Streaming benign trace of a fixed packet count for throughput runs.
/// Sessions arrive as a Poisson process; packets are released in
/// timestamp order through a small heap.
pub struct BulkTrace {
    rng: ChaCha8Rng,
    remaining: u64,
    heap: BinaryHeap<Reverse<(u64, u64, HeapPkt)>>,
    next_session_us: u64,
    mean_gap_us: f64,
    seq: u64,
    ports: Vec<u16>,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct HeapPkt {
    src: u32,
    dst: u32,
    sport: u16,
    dport: u16,
    udp: bool,
    flags: u8,
    len: u32,
}

const BULK_CLIENTS: u32 = 5000;
const BULK_SERVERS: u32 = 64;

impl BulkTrace {
    /// `pps` is the trace-time packet rate.
    pub fn new(seed: u64, packets: u64, pps: f64) -> Self {
        let avg_pkts_per_session = 14.0;
        BulkTrace {
            rng: ChaCha8Rng::seed_from_u64(seed),
            remaining: packets,
            heap: BinaryHeap::new(),
            next_session_us: 0,
            mean_gap_us: 1e6 * avg_pkts_per_session / pps,
            seq: 0,
            ports: vec![32_768; BULK_CLIENTS as usize],
        }
    }

    fn push(&mut self, t: u64, p: HeapPkt) {
        self.heap.push(Reverse((t, self.seq, p)));
        self.seq += 1;
    }

    fn spawn_session(&mut self) {
        let t0 = self.next_session_us;
        let u: f64 = self.rng.random::<f64>().max(1e-12);
        self.next_session_us += (-u.ln() * self.mean_gap_us) as u64 + 1;
        let c = self.rng.random_range(0..BULK_CLIENTS);
        let s = self.rng.random_range(0..BULK_SERVERS);
        let client = u32::from_be_bytes([10, 128, 0, 0]) + c;
        let server = u32::from_be_bytes([198, 18, 0, 0]) + s;
        let port = &mut self.ports[c as usize];
        let cport = *port;
        *port = if *port == u16::MAX { 32_768 } else { *port + 1 };
        let roll: f64 = self.rng.random();
        if roll < 0.2 {
            let q = HeapPkt { src: client, dst: server, sport: cport, dport: 53, udp: true, flags: 0, len: 70 };
            self.push(t0, q);
            let r = HeapPkt { src: server, dst: client, sport: 53, dport: cport, udp: true, flags: 0, len: 200 };
            let rtt = self.rng.random_range(500..5_000);
            self.push(t0 + rtt, r);
            return;
        }
        let data = if roll < 0.3 { self.rng.random_range(20..40) } else { self.rng.random_range(2..8) };
        let mut t = t0;
        let req = [(FLAG_SYN, 60), (FLAG_ACK, 52), (FLAG_PSH | FLAG_ACK, 300), (FLAG_FIN | FLAG_ACK, 52)];
        for (flags, len) in req {
            self.push(t, HeapPkt { src: client, dst: server, sport: cport, dport: 443, udp: false, flags, len });
            t += self.rng.random_range(200..5_000);
        }
        let mut t = t0 + self.rng.random_range(200..5_000);
        self.push(t, HeapPkt { src: server, dst: client, sport: 443, dport: cport, udp: false, flags: FLAG_SYN | FLAG_ACK, len: 60 });
        for _ in 0..data {
            t += self.rng.random_range(100..3_000);
            self.push(t, HeapPkt { src: server, dst: client, sport: 443, dport: cport, udp: false, flags: FLAG_PSH | FLAG_ACK, len: 1400 });
        }
        t += self.rng.random_range(100..3_000);
        self.push(t, HeapPkt { src: server, dst: client, sport: 443, dport: cport, udp: false, flags: FLAG_FIN | FLAG_ACK, len: 52 });
    }
}

impl Iterator for BulkTrace {
    type Item = PacketRecord;

    fn next(&mut self) -> Option<PacketRecord> {
        if self.remaining == 0 {
            return None;
        }
        while self.heap.peek().is_none_or(|Reverse((t, _, _))| *t >= self.next_session_us) {
            self.spawn_session();
        }
        let Reverse((t, _, p)) = self.heap.pop()?;
        self.remaining -= 1;
        Some(PacketRecord {
            ts: (BASE_US + t) as f64 / 1e6,
            src: IpAddr::V4(Ipv4Addr::from(p.src)),
            dst: IpAddr::V4(Ipv4Addr::from(p.dst)),
            sport: p.sport,
            dport: p.dport,
            proto: if p.udp { L4Proto::Udp } else { L4Proto::Tcp },
            flags: p.flags,
            len: p.len,
        })
    }
}
