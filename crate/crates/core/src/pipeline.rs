//! Windowed end-to-end run: packets feed the flow table, completed flows are
//! bucketed into fixed windows of trace time, and each window is turned into
//! a graph and, optionally, detection verdicts.
//!
//! Windows start at the first packet's timestamp. A completed flow belongs to
//! the window holding its last packet; a flow that lands in a window already
//! processed (possible only with out-of-order timestamps) joins the earliest
//! open window instead. A window is processed once a sweep runs at a time
//! past its end plus the packet timeout, because by then every flow that
//! ended inside it has been evicted.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use log::{debug, info};
use serde::Serialize;
use thiserror::Error;

use crate::config::Config;
use crate::detect::{detect_with_stats, DetectStats, Verdict};
use crate::flow_table::{sort_flows, Completed, FlowTable};
use crate::graph::InteractionGraph;
use crate::ingest::{IngestError, PacketRecord};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("writing output: {0}")]
    Output(#[from] std::io::Error),
}

pub struct WindowOutput {
    pub index: u64,
    pub start: f64,
    pub end: f64,
    pub short_flows: usize,
    pub long_flows: usize,
    pub graph: InteractionGraph,
    /// Empty when detection is disabled.
    pub verdicts: Vec<Verdict>,
    pub stats: DetectStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowSummary {
    pub index: u64,
    pub start: f64,
    pub end: f64,
    pub short_flows: usize,
    pub long_flows: usize,
    pub vertices: usize,
    pub edges: usize,
    pub components: usize,
    pub abnormal_components: usize,
    pub pre_clusters: usize,
    pub critical_vertices: usize,
    pub malicious: usize,
}

impl WindowSummary {
    fn of(w: &WindowOutput) -> Self {
        WindowSummary {
            index: w.index,
            start: w.start,
            end: w.end,
            short_flows: w.short_flows,
            long_flows: w.long_flows,
            vertices: w.graph.vertices().len(),
            edges: w.graph.edge_count(),
            components: w.stats.components,
            abnormal_components: w.stats.abnormal_components,
            pre_clusters: w.stats.pre_clusters,
            critical_vertices: w.stats.critical_vertices,
            malicious: w.verdicts.iter().filter(|v| v.malicious).count(),
        }
    }
}

/// Seconds spent per stage. Stages do not overlap, so their sum never
/// exceeds `wall`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageTimes {
    /// Reading packets and maintaining the flow table.
    pub ingest: f64,
    pub construction: f64,
    pub preprocessing: f64,
    pub detection: f64,
    pub output: f64,
    pub wall: f64,
}

impl StageTimes {
    pub fn stage_sum(&self) -> f64 {
        self.ingest + self.construction + self.preprocessing + self.detection + self.output
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub packets: u64,
    pub flows: u64,
    pub windows: Vec<WindowSummary>,
    pub timings: StageTimes,
    /// Resident-set high-water mark of the process, when the platform
    /// reports one.
    pub peak_memory_kb: Option<u64>,
    pub config: Config,
    /// Keys that differ from the defaults.
    pub overrides: Vec<String>,
}

impl RunReport {
    pub fn packets_per_second(&self) -> f64 {
        self.packets as f64 / self.timings.wall.max(1e-9)
    }

    pub fn malicious(&self) -> usize {
        self.windows.iter().map(|w| w.malicious).sum()
    }
}

/// Peak resident set size from `/proc/self/status`.
pub fn peak_memory_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

struct Windows {
    start: Option<f64>,
    len: f64,
    next_open: u64,
    pending: BTreeMap<u64, Completed>,
}

impl Windows {
    fn index_of(&self, ts: f64) -> u64 {
        let start = self.start.unwrap_or(ts);
        let raw = ((ts - start) / self.len).floor();
        let idx = if raw.is_finite() && raw > 0.0 { raw as u64 } else { 0 };
        idx.max(self.next_open)
    }

    fn bounds(&self, idx: u64) -> (f64, f64) {
        let start = self.start.unwrap_or(0.0);
        if self.len.is_infinite() {
            return (start, f64::INFINITY);
        }
        (start + idx as f64 * self.len, start + (idx + 1) as f64 * self.len)
    }

    fn add(&mut self, done: Completed) {
        for f in done.short {
            let i = self.index_of(f.last_ts);
            self.pending.entry(i).or_default().short.push(f);
        }
        for f in done.long {
            let i = self.index_of(f.last_ts);
            self.pending.entry(i).or_default().long.push(f);
        }
    }

    /// Windows that can no longer receive flows after a sweep at `now`.
    fn closable(&mut self, now: f64, timeout: f64) -> Vec<(u64, Completed)> {
        let Some(start) = self.start else { return Vec::new() };
        let raw = ((now - timeout - start) / self.len).floor();
        let bound = if raw.is_finite() && raw > 0.0 { raw as u64 } else { 0 };
        self.next_open = self.next_open.max(bound);
        let keep = self.pending.split_off(&self.next_open);
        std::mem::replace(&mut self.pending, keep).into_iter().collect()
    }

    fn drain(&mut self) -> Vec<(u64, Completed)> {
        let all = std::mem::take(&mut self.pending);
        if let Some(&last) = all.keys().next_back() {
            self.next_open = last + 1;
        }
        all.into_iter().collect()
    }
}

struct Runner<'c, F> {
    cfg: &'c Config,
    detect: bool,
    sink: F,
    report: RunReport,
}

impl<F: FnMut(&WindowOutput) -> std::io::Result<()>> Runner<'_, F> {
    fn process(&mut self, index: u64, bounds: (f64, f64), mut flows: Completed) -> Result<(), PipelineError> {
        sort_flows(&mut flows.short);
        sort_flows(&mut flows.long);
        let t = Instant::now();
        let graph = InteractionGraph::from_flows(&flows.short, &flows.long, self.cfg.agg_line);
        self.report.timings.construction += t.elapsed().as_secs_f64();
        let (verdicts, stats) =
            if self.detect { detect_with_stats(&graph, &self.cfg.detect()) } else { (Vec::new(), DetectStats::default()) };
        self.report.timings.preprocessing += stats.preprocess_time.as_secs_f64();
        self.report.timings.detection += stats.detect_time.as_secs_f64();
        let out = WindowOutput {
            index,
            start: bounds.0,
            end: bounds.1,
            short_flows: flows.short.len(),
            long_flows: flows.long.len(),
            graph,
            verdicts,
            stats,
        };
        let summary = WindowSummary::of(&out);
        info!(
            "window {index}: {} short + {} long flows, {} edges, {} abnormal components, {} malicious",
            summary.short_flows, summary.long_flows, summary.edges, summary.abnormal_components, summary.malicious
        );
        self.report.flows += (summary.short_flows + summary.long_flows) as u64;
        let t = Instant::now();
        (self.sink)(&out)?;
        self.report.timings.output += t.elapsed().as_secs_f64();
        self.report.windows.push(summary);
        Ok(())
    }
}

/// Run the pipeline over `packets`, calling `sink` once per non-empty window
/// in window order. With `detect` unset only graphs are built.
pub fn run<I, F>(packets: I, cfg: &Config, overrides: Vec<String>, detect: bool, sink: F) -> Result<RunReport, PipelineError>
where
    I: IntoIterator<Item = Result<PacketRecord, IngestError>>,
    F: FnMut(&WindowOutput) -> std::io::Result<()>,
{
    let wall = Instant::now();
    let mut table = FlowTable::new(cfg.flow_table());
    let mut windows = Windows { start: None, len: cfg.window, next_open: 0, pending: BTreeMap::new() };
    let report = RunReport {
        packets: 0,
        flows: 0,
        windows: Vec::new(),
        timings: StageTimes::default(),
        peak_memory_kb: None,
        config: cfg.clone(),
        overrides,
    };
    let mut runner = Runner { cfg, detect, sink, report };
    let mut in_windows = Duration::ZERO;

    for pkt in packets {
        let pkt = pkt?;
        runner.report.packets += 1;
        if windows.start.is_none() {
            windows.start = Some(pkt.ts);
        }
        if let Some(done) = table.push(&pkt) {
            windows.add(done);
            let now = table.clock().unwrap_or(pkt.ts);
            let ready = windows.closable(now, cfg.pkt_timeout);
            if !ready.is_empty() {
                let t = Instant::now();
                for (idx, flows) in ready {
                    runner.process(idx, windows.bounds(idx), flows)?;
                }
                in_windows += t.elapsed();
            }
        }
    }
    windows.add(table.flush());
    let t = Instant::now();
    for (idx, flows) in windows.drain() {
        runner.process(idx, windows.bounds(idx), flows)?;
    }
    in_windows += t.elapsed();

    let mut report = runner.report;
    let wall = wall.elapsed();
    report.timings.wall = wall.as_secs_f64();
    report.timings.ingest = wall.saturating_sub(in_windows).as_secs_f64();
    report.peak_memory_kb = peak_memory_kb();
    debug!("stage times: {:?}", report.timings);
    Ok(report)
}
