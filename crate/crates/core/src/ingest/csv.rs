//! CSV trace format: `ts,src,dst,sport,dport,proto,flags,len`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;

use super::{IngestError, L4Proto, PacketRecord};

pub const HEADER: &str = "ts,src,dst,sport,dport,proto,flags,len";

/// Streaming reader over a CSV trace. Rows are yielded in file order.
pub struct CsvPackets {
    reader: ::csv::Reader<BufReader<File>>,
    record: ::csv::StringRecord,
    row: u64,
    /// Rows whose protocol string was not recognised and became `OTHER`.
    pub unknown_proto: u64,
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<CsvPackets, IngestError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })?;
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(::csv::Trim::All)
        .from_reader(BufReader::with_capacity(1 << 16, file));
    let headers = reader.headers().map_err(|e| IngestError::Row { row: 1, msg: e.to_string() })?;
    let found = headers.iter().collect::<Vec<_>>().join(",");
    if found != HEADER {
        return Err(IngestError::Header { expected: HEADER.into(), found });
    }
    Ok(CsvPackets { reader, record: ::csv::StringRecord::new(), row: 1, unknown_proto: 0 })
}

impl CsvPackets {
    fn parse(&mut self) -> Result<PacketRecord, String> {
        let r = &self.record;
        if r.len() != 8 {
            return Err(format!("expected 8 fields, found {}", r.len()));
        }
        let ts: f64 = r[0].parse().map_err(|_| format!("bad timestamp `{}`", &r[0]))?;
        let src = r[1].parse().map_err(|_| format!("bad src address `{}`", &r[1]))?;
        let dst = r[2].parse().map_err(|_| format!("bad dst address `{}`", &r[2]))?;
        let sport = r[3].parse().map_err(|_| format!("bad src port `{}`", &r[3]))?;
        let dport = r[4].parse().map_err(|_| format!("bad dst port `{}`", &r[4]))?;
        let proto = match L4Proto::parse(&r[5]) {
            Some(p) => p,
            None => {
                warn!("row {}: unknown protocol `{}`, treating as OTHER", self.row, &r[5]);
                self.unknown_proto += 1;
                L4Proto::Other
            }
        };
        let mut flags = parse_flags(&r[6]).ok_or_else(|| format!("bad flags `{}`", &r[6]))?;
        if proto != L4Proto::Tcp && flags != 0 {
            warn!("row {}: tcp flags on a {} packet ignored", self.row, proto);
            flags = 0;
        }
        let len = r[7].parse().map_err(|_| format!("bad length `{}`", &r[7]))?;
        let pkt = PacketRecord { ts, src, dst, sport, dport, proto, flags, len };
        pkt.validate()?;
        Ok(pkt)
    }
}

fn parse_flags(s: &str) -> Option<u8> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u8::from_str_radix(hex, 16).ok(),
        None if s.is_empty() => Some(0),
        None => s.parse().ok(),
    }
}

impl Iterator for CsvPackets {
    type Item = Result<PacketRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.row += 1;
        match self.reader.read_record(&mut self.record) {
            Ok(false) => None,
            Ok(true) => Some(self.parse().map_err(|msg| IngestError::Row { row: self.row, msg })),
            Err(e) => Some(Err(IngestError::Row { row: self.row, msg: e.to_string() })),
        }
    }
}

pub fn write_csv<'a>(
    path: impl AsRef<Path>,
    packets: impl IntoIterator<Item = &'a PacketRecord>,
) -> Result<(), IngestError> {
    let path = path.as_ref();
    let io_err = |source| IngestError::Io { path: path.display().to_string(), source };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    write_csv_to(&mut w, packets).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn write_csv_to<'a, W: Write>(
    w: &mut W,
    packets: impl IntoIterator<Item = &'a PacketRecord>,
) -> std::io::Result<()> {
    writeln!(w, "{HEADER}")?;
    for p in packets {
        writeln!(
            w,
            "{},{},{},{},{},{},0x{:02x},{}",
            p.ts, p.src, p.dst, p.sport, p.dport, p.proto, p.flags, p.len
        )?;
    }
    Ok(())
}
