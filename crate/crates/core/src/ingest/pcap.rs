//! PCAP and pcapng ingestion, plus a minimal classic-pcap writer used to
//! produce fixtures.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::IpAddr;
use std::path::Path;

use etherparse::{IpNumber, NetSlice, PacketBuilder, SlicedPacket, TransportSlice};
use log::warn;
use pcap_parser::pcapng::Block;
use pcap_parser::traits::PcapReaderIterator;
use pcap_parser::{Linktype, PcapBlockOwned, PcapError};

use super::{IngestError, L4Proto, PacketRecord};

const READ_BUFFER: usize = 1 << 20;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PcapStats {
    pub packets: u64,
    pub skipped_non_ip: u64,
    pub truncated: u64,
}

#[derive(Clone, Copy)]
struct Interface {
    linktype: Linktype,
    resolution: u64,
    offset: u64,
}

struct DecodeState {
    interfaces: Vec<Interface>,
    stats: PcapStats,
}

/// Streaming reader over a classic or pcapng capture.
pub struct PcapPackets {
    reader: Option<Box<dyn PcapReaderIterator + Send>>,
    state: DecodeState,
}

impl PcapPackets {
    pub fn stats(&self) -> PcapStats {
        self.state.stats
    }
}

pub fn read_pcap(path: impl AsRef<Path>) -> Result<PcapPackets, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    let reader = match pcap_parser::create_reader(READ_BUFFER, file) {
        Ok(r) => Some(r),
        // A zero-byte file carries no packets.
        Err(PcapError::Eof) => None,
        Err(e) => return Err(IngestError::Pcap(format!("{}: {e}", path.display()))),
    };
    Ok(PcapPackets { reader, state: DecodeState { interfaces: Vec::new(), stats: PcapStats::default() } })
}

enum Decoded {
    Packet(PacketRecord),
    NonIp,
    Truncated,
    Nothing,
}

impl Iterator for PcapPackets {
    type Item = Result<PacketRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        let reader = self.reader.as_mut()?;
        loop {
            match reader.next() {
                Ok((offset, block)) => {
                    let decoded = self.state.handle(block);
                    reader.consume(offset);
                    match decoded {
                        Decoded::Packet(p) => {
                            self.state.stats.packets += 1;
                            return Some(Ok(p));
                        }
                        Decoded::NonIp => self.state.stats.skipped_non_ip += 1,
                        Decoded::Truncated => {
                            warn!("skipping truncated or malformed packet");
                            self.state.stats.truncated += 1;
                        }
                        Decoded::Nothing => {}
                    }
                }
                Err(PcapError::Eof) => {
                    self.reader = None;
                    return None;
                }
                Err(PcapError::Incomplete(_)) => {
                    if let Err(e) = reader.refill() {
                        let msg = e.to_string();
                        self.reader = None;
                        return Some(Err(IngestError::Pcap(msg)));
                    }
                }
                Err(PcapError::UnexpectedEof) => {
                    warn!("capture ends mid-record");
                    self.state.stats.truncated += 1;
                    self.reader = None;
                    return None;
                }
                Err(e) => {
                    let msg = e.to_string();
                    self.reader = None;
                    return Some(Err(IngestError::Pcap(msg)));
                }
            }
        }
    }
}

impl DecodeState {
    fn handle(&mut self, block: PcapBlockOwned<'_>) -> Decoded {
        match block {
            PcapBlockOwned::LegacyHeader(h) => {
                let resolution = if h.is_nanosecond_precision() { 1_000_000_000 } else { 1_000_000 };
                self.interfaces = vec![Interface { linktype: h.network, resolution, offset: 0 }];
                Decoded::Nothing
            }
            PcapBlockOwned::Legacy(b) => {
                let Some(iface) = self.interfaces.first().copied() else {
                    return Decoded::Truncated;
                };
                if b.caplen < b.origlen {
                    return Decoded::Truncated;
                }
                let ts = timestamp(b.ts_sec as u64, b.ts_usec as u64, iface.resolution);
                decode_frame(b.data, iface.linktype, ts)
            }
            PcapBlockOwned::NG(Block::SectionHeader(_)) => {
                self.interfaces.clear();
                Decoded::Nothing
            }
            PcapBlockOwned::NG(Block::InterfaceDescription(idb)) => {
                let resolution = idb.ts_resolution().unwrap_or(1_000_000);
                self.interfaces.push(Interface {
                    linktype: idb.linktype,
                    resolution,
                    offset: idb.ts_offset() as u64,
                });
                Decoded::Nothing
            }
            PcapBlockOwned::NG(Block::EnhancedPacket(epb)) => {
                let Some(iface) = self.interfaces.get(epb.if_id as usize).copied() else {
                    return Decoded::Truncated;
                };
                if epb.caplen < epb.origlen {
                    return Decoded::Truncated;
                }
                let (sec, frac) = epb.decode_ts(iface.offset, iface.resolution);
                let ts = timestamp(sec as u64, frac as u64, iface.resolution);
                decode_frame(epb.data, iface.linktype, ts)
            }
            PcapBlockOwned::NG(Block::SimplePacket(spb)) => {
                // Simple packet blocks carry no timestamp.
                let Some(iface) = self.interfaces.first().copied() else {
                    return Decoded::Truncated;
                };
                decode_frame(spb.data, iface.linktype, 0.0)
            }
            PcapBlockOwned::NG(_) => Decoded::Nothing,
        }
    }
}

fn timestamp(sec: u64, frac: u64, resolution: u64) -> f64 {
    (sec as u128 * resolution as u128 + frac as u128) as f64 / resolution as f64
}

fn decode_frame(data: &[u8], linktype: Linktype, ts: f64) -> Decoded {
    let sliced = match linktype {
        Linktype::ETHERNET => SlicedPacket::from_ethernet(data),
        Linktype::RAW | Linktype::IPV4 | Linktype::IPV6 => SlicedPacket::from_ip(data),
        Linktype::LINUX_SLL => SlicedPacket::from_linux_sll(data),
        Linktype::NULL if data.len() >= 4 => SlicedPacket::from_ip(&data[4..]),
        _ => return Decoded::NonIp,
    };
    let Ok(sliced) = sliced else {
        return Decoded::Truncated;
    };
    let (src, dst, len, ip_number) = match &sliced.net {
        Some(NetSlice::Ipv4(ip)) => {
            let h = ip.header();
            (IpAddr::V4(h.source_addr()), IpAddr::V4(h.destination_addr()), h.total_len() as u32, ip.payload().ip_number)
        }
        Some(NetSlice::Ipv6(ip)) => {
            let h = ip.header();
            (
                IpAddr::V6(h.source_addr()),
                IpAddr::V6(h.destination_addr()),
                h.payload_length() as u32 + 40,
                ip.payload().ip_number,
            )
        }
        _ => return Decoded::NonIp,
    };
    let (proto, sport, dport, flags) = match &sliced.transport {
        Some(TransportSlice::Tcp(t)) => {
            let flags = [t.fin(), t.syn(), t.rst(), t.psh(), t.ack(), t.urg(), t.ece(), t.cwr()]
                .iter()
                .enumerate()
                .fold(0u8, |acc, (bit, set)| if *set { acc | (1 << bit) } else { acc });
            (L4Proto::Tcp, t.source_port(), t.destination_port(), flags)
        }
        Some(TransportSlice::Udp(u)) => (L4Proto::Udp, u.source_port(), u.destination_port(), 0),
        Some(TransportSlice::Icmpv4(_)) | Some(TransportSlice::Icmpv6(_)) => (L4Proto::Icmp, 0, 0, 0),
        _ if ip_number == IpNumber::ICMP || ip_number == IpNumber::IPV6_ICMP => (L4Proto::Icmp, 0, 0, 0),
        _ => (L4Proto::Other, 0, 0, 0),
    };
    Decoded::Packet(PacketRecord { ts, src, dst, sport, dport, proto, flags, len: len.max(1) })
}

/// Classic pcap writer (microsecond timestamps, Ethernet link type).
pub struct PcapWriter<W: Write> {
    out: W,
    frame: Vec<u8>,
}

const SRC_MAC: [u8; 6] = [0x02, 0, 0, 0, 0, 0x01];
const DST_MAC: [u8; 6] = [0x02, 0, 0, 0, 0, 0x02];
const OTHER_IP_NUMBER: IpNumber = IpNumber::GRE;

impl<W: Write> PcapWriter<W> {
    pub fn new(mut out: W) -> std::io::Result<Self> {
        out.write_all(&0xa1b2_c3d4u32.to_le_bytes())?;
        out.write_all(&2u16.to_le_bytes())?;
        out.write_all(&4u16.to_le_bytes())?;
        out.write_all(&0i32.to_le_bytes())?;
        out.write_all(&0u32.to_le_bytes())?;
        out.write_all(&65_535u32.to_le_bytes())?;
        out.write_all(&1u32.to_le_bytes())?;
        Ok(PcapWriter { out, frame: Vec::with_capacity(2048) })
    }

    pub fn write_frame(&mut self, ts: f64, frame: &[u8]) -> std::io::Result<()> {
        let micros = (ts * 1e6).round() as u64;
        self.out.write_all(&((micros / 1_000_000) as u32).to_le_bytes())?;
        self.out.write_all(&((micros % 1_000_000) as u32).to_le_bytes())?;
        self.out.write_all(&(frame.len() as u32).to_le_bytes())?;
        self.out.write_all(&(frame.len() as u32).to_le_bytes())?;
        self.out.write_all(frame)
    }

    /// Synthesise an Ethernet frame whose IP total length equals `pkt.len`.
    pub fn write_packet(&mut self, pkt: &PacketRecord) -> std::io::Result<()> {
        let invalid = |msg: String| std::io::Error::new(std::io::ErrorKind::InvalidInput, msg);
        let eth = PacketBuilder::ethernet2(SRC_MAC, DST_MAC);
        let (ip, ip_header_len) = match (pkt.src, pkt.dst) {
            (IpAddr::V4(s), IpAddr::V4(d)) => (eth.ipv4(s.octets(), d.octets(), 64), 20),
            (IpAddr::V6(s), IpAddr::V6(d)) => (eth.ipv6(s.octets(), d.octets(), 64), 40),
            _ => return Err(invalid("mixed address families".into())),
        };
        let transport_len = match pkt.proto {
            L4Proto::Tcp => 20,
            L4Proto::Udp | L4Proto::Icmp => 8,
            L4Proto::Other => 0,
        };
        let payload_len = (pkt.len as usize)
            .checked_sub(ip_header_len + transport_len)
            .ok_or_else(|| invalid(format!("length {} too small for {} headers", pkt.len, pkt.proto)))?;
        let payload = vec![0u8; payload_len];
        self.frame.clear();
        let res = match pkt.proto {
            L4Proto::Tcp => {
                let mut b = ip.tcp(pkt.sport, pkt.dport, 0, 65_535);
                let f = pkt.flags;
                if f & 0x01 != 0 {
                    b = b.fin();
                }
                if f & 0x02 != 0 {
                    b = b.syn();
                }
                if f & 0x04 != 0 {
                    b = b.rst();
                }
                if f & 0x08 != 0 {
                    b = b.psh();
                }
                if f & 0x10 != 0 {
                    b = b.ack(1);
                }
                if f & 0x20 != 0 {
                    b = b.urg(0);
                }
                if f & 0x40 != 0 {
                    b = b.ece();
                }
                if f & 0x80 != 0 {
                    b = b.cwr();
                }
                b.write(&mut self.frame, &payload).map_err(|e| e.to_string())
            }
            L4Proto::Udp => ip.udp(pkt.sport, pkt.dport).write(&mut self.frame, &payload).map_err(|e| e.to_string()),
            L4Proto::Icmp if ip_header_len == 20 => {
                ip.icmpv4_echo_request(0, 0).write(&mut self.frame, &payload).map_err(|e| e.to_string())
            }
            L4Proto::Icmp => ip.icmpv6_echo_request(0, 0).write(&mut self.frame, &payload).map_err(|e| e.to_string()),
            L4Proto::Other => ip.write(&mut self.frame, OTHER_IP_NUMBER, &payload).map_err(|e| e.to_string()),
        };
        res.map_err(invalid)?;
        let frame = std::mem::take(&mut self.frame);
        let out = self.write_frame(pkt.ts, &frame);
        self.frame = frame;
        out
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_pcap<'a>(
    path: impl AsRef<Path>,
    packets: impl IntoIterator<Item = &'a PacketRecord>,
) -> Result<(), IngestError> {
    let path = path.as_ref();
    let io_err = |source| IngestError::Io { path: path.display().to_string(), source };
    let file = File::create(path).map_err(io_err)?;
    let mut w = PcapWriter::new(BufWriter::new(file)).map_err(io_err)?;
    for p in packets {
        w.write_packet(p).map_err(io_err)?;
    }
    w.finish().map_err(io_err)?;
    Ok(())
}
