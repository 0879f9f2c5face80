//! Packet ingestion: trace readers, per-packet feature extraction and the
//! synthetic trace generator used by tests and benchmarks.

mod csv;
mod pcap;
pub mod synth;

use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::csv::{read_csv, write_csv, CsvPackets};
pub use self::pcap::{read_pcap, write_pcap, PcapPackets, PcapStats};
pub use self::synth::{gen_synthetic, Scenario, SyntheticTrace};

pub const MASK_TCP: u16 = 1 << 0;
pub const MASK_UDP: u16 = 1 << 1;
pub const MASK_ICMP: u16 = 1 << 2;
pub const MASK_OTHER: u16 = 1 << 3;

pub const FLAG_FIN: u8 = 0x01;
pub const FLAG_SYN: u8 = 0x02;
pub const FLAG_RST: u8 = 0x04;
pub const FLAG_PSH: u8 = 0x08;
pub const FLAG_ACK: u8 = 0x10;
pub const FLAG_URG: u8 = 0x20;
pub const FLAG_ECE: u8 = 0x40;
pub const FLAG_CWR: u8 = 0x80;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: {msg}")]
    Row { row: u64, msg: String },
    #[error("bad header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("pcap: {0}")]
    Pcap(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum L4Proto {
    Tcp,
    Udp,
    Icmp,
    Other,
}

impl L4Proto {
    pub fn as_str(self) -> &'static str {
        match self {
            L4Proto::Tcp => "TCP",
            L4Proto::Udp => "UDP",
            L4Proto::Icmp => "ICMP",
            L4Proto::Other => "OTHER",
        }
    }

    pub fn mask_bit(self) -> u16 {
        match self {
            L4Proto::Tcp => MASK_TCP,
            L4Proto::Udp => MASK_UDP,
            L4Proto::Icmp => MASK_ICMP,
            L4Proto::Other => MASK_OTHER,
        }
    }

    /// Parse a protocol name; anything unrecognised is `None` so callers can
    /// decide whether to fall back to `Other`.
    pub fn parse(s: &str) -> Option<L4Proto> {
        match s.trim().to_ascii_uppercase().as_str() {
            "TCP" | "6" => Some(L4Proto::Tcp),
            "UDP" | "17" => Some(L4Proto::Udp),
            "ICMP" | "ICMPV6" | "1" | "58" => Some(L4Proto::Icmp),
            "OTHER" => Some(L4Proto::Other),
            _ => None,
        }
    }
}

impl fmt::Display for L4Proto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for L4Proto {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        L4Proto::parse(s).ok_or_else(|| format!("unknown protocol `{s}`"))
    }
}

/// One packet as seen on the wire, reduced to the fields the pipeline uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketRecord {
    pub ts: f64,
    pub src: IpAddr,
    pub dst: IpAddr,
    pub sport: u16,
    pub dport: u16,
    pub proto: L4Proto,
    /// TCP flags byte, zero for every other protocol.
    pub flags: u8,
    /// IP total length in bytes.
    pub len: u32,
}

impl PacketRecord {
    pub fn validate(&self) -> Result<(), String> {
        if !self.ts.is_finite() || self.ts < 0.0 {
            return Err(format!("timestamp {} is not a finite non-negative value", self.ts));
        }
        if self.len == 0 {
            return Err("length must be at least 1".into());
        }
        if self.proto != L4Proto::Tcp && self.flags != 0 {
            return Err("tcp flags set on a non-TCP packet".into());
        }
        Ok(())
    }
}

/// The (protocol mask, length, interval) triple every later stage consumes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerPacketFeature {
    pub mask: u16,
    pub len: u32,
    pub interval: f64,
}

pub fn protocol_mask(proto: L4Proto, flags: u8) -> u16 {
    let flag_bits = if proto == L4Proto::Tcp { (flags as u16) << 8 } else { 0 };
    proto.mask_bit() | flag_bits
}

/// Extract the per-packet feature. Out-of-order arrivals clamp the interval
/// to zero instead of going negative.
pub fn featurize(pkt: &PacketRecord, prev_ts_same_flow: Option<f64>) -> PerPacketFeature {
    let interval = match prev_ts_same_flow {
        Some(prev) => (pkt.ts - prev).max(0.0),
        None => 0.0,
    };
    PerPacketFeature { mask: protocol_mask(pkt.proto, pkt.flags), len: pkt.len, interval }
}
