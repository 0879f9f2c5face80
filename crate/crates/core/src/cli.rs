//! Command-line front end. Exit codes: 0 success, 1 a requested check
//! failed, 2 unreadable or malformed input, 3 bad configuration or usage.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use crate::config::{Config, ConfigError};
use crate::detect::Verdict;
use crate::entropy::{
    dpi_gaps, grid_point, integrate_density, DtmcParams, EntropyError, Mode, CALIBRATION_PRESETS, P_RANGE, Q_RANGE,
};
use crate::graph::{export_graph, import_graph, EdgeRef, InteractionGraph};
use crate::ingest::synth::write_sidecar;
use crate::ingest::{gen_synthetic, read_csv, read_pcap, write_csv, write_pcap, IngestError, PacketRecord, Scenario};
use crate::pipeline::{run, PipelineError, RunReport, WindowOutput};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Config(String),
    Check(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Check(_) => EXIT_CHECK_FAILED,
            CliError::Input(_) => EXIT_INPUT,
            CliError::Config(_) => EXIT_CONFIG,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Config(m) | CliError::Check(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<EntropyError> for CliError {
    fn from(e: EntropyError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Input(e.to_string())
    }
}

fn output_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Input(format!("cannot write {}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "flowvision", version, about = "Flow interaction graph detection of malicious traffic")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run detection and write per-edge verdicts.
    Detect(DetectArgs),
    /// Build and export the interaction graph, or compare two exports.
    Graph(GraphArgs),
    /// Evaluate the flow-recording information model.
    Entropy(EntropyArgs),
    /// Generate a synthetic trace with a ground-truth sidecar.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Pcap,
    Csv,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Packet trace to read.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Trace format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Verdict JSONL path; the report and summary are written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Analysis window length in seconds.
    #[arg(long)]
    window: Option<f64>,
}

#[derive(Debug, Args)]
#[command(args_conflicts_with_subcommands = true)]
struct GraphArgs {
    #[command(subcommand)]
    action: Option<GraphAction>,
    #[command(flatten)]
    input: InputArgs,
    /// Graph JSON path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum GraphAction {
    /// Exit 0 when two graph exports are structurally equal, 1 otherwise.
    Diff { a: PathBuf, b: PathBuf },
}

#[derive(Debug, Args)]
struct EntropyArgs {
    /// Parameter preset supplying s, e_count, k and c.
    #[arg(long, default_value = "length")]
    preset: String,
    /// Number of feature states.
    #[arg(long)]
    s: Option<u32>,
    /// Number of edges in the state diagram.
    #[arg(long)]
    e_count: Option<u32>,
    /// Packet count separating short from long flows.
    #[arg(long)]
    k: Option<u32>,
    /// Mean number of flows per aggregated short edge.
    #[arg(long)]
    c: Option<f64>,
    /// Evaluate a single point.
    #[arg(long, requires = "q")]
    p: Option<f64>,
    /// Geometric parameter of the flow length at the single point.
    #[arg(long, requires = "p")]
    q: Option<f64>,
    /// Write a CSV grid over the feasible region.
    #[arg(long)]
    grid: bool,
    /// Grid intervals along p.
    #[arg(long, default_value_t = 32)]
    np: usize,
    /// Grid intervals along q.
    #[arg(long, default_value_t = 16)]
    nq: usize,
    /// Check that the graph mode never keeps more information than the ideal
    /// recorder on the grid.
    #[arg(long)]
    check_dpi: bool,
    /// Integrate every mode's density over the feasible region.
    #[arg(long)]
    integrate: bool,
    /// Trapezoid intervals per axis for `--integrate`.
    #[arg(long, default_value_t = 64)]
    grid_n: usize,
    /// Accept a point outside the feasible region.
    #[arg(long)]
    no_region_check: bool,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Print the scenario names.
    #[arg(long)]
    list: bool,
    /// One of the names printed by `--list`.
    #[arg(long, required_unless_present = "list")]
    scenario: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trace path; the labels go to `<out>.labels.csv`.
    #[arg(long, required_unless_present = "list")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

/// Parse arguments, run, print any error and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Detect(a) => cmd_detect(a),
        Command::Graph(a) => match a.action {
            Some(GraphAction::Diff { a, b }) => cmd_graph_diff(&a, &b),
            None => cmd_graph(a),
        },
        Command::Entropy(a) => cmd_entropy(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn load_config(path: Option<&Path>) -> Result<(Config, Vec<String>), CliError> {
    match path {
        Some(p) => Ok(Config::load(p)?),
        None => Ok((Config::default(), Vec::new())),
    }
}

fn infer_format(path: &Path, given: Option<Format>) -> Format {
    given.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("pcap") || e.eq_ignore_ascii_case("pcapng") => Format::Pcap,
        _ => Format::Csv,
    })
}

fn open_trace(args: &InputArgs) -> Result<Box<dyn Iterator<Item = Result<PacketRecord, IngestError>>>, CliError> {
    let path = args.input.as_deref().ok_or_else(|| CliError::Config("--input is required".into()))?;
    Ok(match infer_format(path, args.format) {
        Format::Csv => Box::new(read_csv(path)?),
        Format::Pcap => Box::new(read_pcap(path)?),
    })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Serialize)]
struct VerdictLine<'a> {
    window: u64,
    edge_id: usize,
    kind: &'static str,
    src: String,
    dst: String,
    flow_count: usize,
    /// `null` for edges in ordinary components.
    loss: Option<f64>,
    loss_center: f64,
    loss_cluster: f64,
    loss_count: f64,
    malicious: bool,
    vertex: Option<&'a str>,
}

fn write_verdicts<W: Write>(w: &mut W, win: &WindowOutput) -> std::io::Result<()> {
    let g = &win.graph;
    let names: Vec<String> = g.vertices().iter().map(|v| v.key.to_string()).collect();
    for (edge_id, v) in win.verdicts.iter().enumerate() {
        let line = verdict_line(g, &names, win.index, edge_id, v);
        serde_json::to_writer(&mut *w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn verdict_line<'a>(g: &InteractionGraph, names: &'a [String], window: u64, edge_id: usize, v: &Verdict) -> VerdictLine<'a> {
    let (src, dst) = g.endpoints(v.edge);
    let (kind, flow_count) = match v.edge {
        EdgeRef::Short(i) => ("short", g.short_edges()[i].flow_count),
        EdgeRef::Long(_) => ("long", 1),
    };
    VerdictLine {
        window,
        edge_id,
        kind,
        src: names[src].clone(),
        dst: names[dst].clone(),
        flow_count,
        loss: v.loss.is_finite().then_some(v.loss),
        loss_center: v.loss_center,
        loss_cluster: v.loss_cluster,
        loss_count: v.loss_count,
        malicious: v.malicious,
        vertex: v.vertex.map(|i| names[i].as_str()),
    }
}

fn write_report(out: &Path, report: &RunReport) -> Result<(), CliError> {
    let report_path = with_suffix(out, ".report.json");
    let f = File::create(&report_path).map_err(output_err(&report_path))?;
    serde_json::to_writer_pretty(BufWriter::new(f), report)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", report_path.display())))?;

    let summary_path = with_suffix(out, ".summary.csv");
    let write_summary = || -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(&summary_path)?;
        if report.windows.is_empty() {
            w.write_record(SUMMARY_HEADER)?;
        }
        for row in &report.windows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    };
    write_summary().map_err(|e| CliError::Input(format!("cannot write {}: {e}", summary_path.display())))
}

const SUMMARY_HEADER: [&str; 12] = [
    "index",
    "start",
    "end",
    "short_flows",
    "long_flows",
    "vertices",
    "edges",
    "components",
    "abnormal_components",
    "pre_clusters",
    "critical_vertices",
    "malicious",
];

fn cmd_detect(a: DetectArgs) -> Result<(), CliError> {
    let (mut cfg, mut overrides) = load_config(a.input.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
        overrides.push("seed".into());
    }
    if let Some(window) = a.window {
        cfg.window = window;
        overrides.push("window".into());
    }
    cfg.validate()?;
    overrides.dedup();
    let packets = open_trace(&a.input)?;
    let out = a.out;
    let file = File::create(&out).map_err(output_err(&out))?;
    let mut w = BufWriter::new(file);
    let report = run(packets, &cfg, overrides, true, |win| write_verdicts(&mut w, win))?;
    w.flush().map_err(output_err(&out))?;
    write_report(&out, &report)?;
    info!(
        "{} packets, {} flows, {} windows, {} malicious edges in {:.2}s",
        report.packets,
        report.flows,
        report.windows.len(),
        report.malicious(),
        report.timings.wall
    );
    Ok(())
}

fn cmd_graph(a: GraphArgs) -> Result<(), CliError> {
    let out = a.out.ok_or_else(|| CliError::Config("--out is required".into()))?;
    let (mut cfg, overrides) = load_config(a.input.config.as_deref())?;
    // one graph over the whole trace
    cfg.window = f64::INFINITY;
    let packets = open_trace(&a.input)?;
    let mut graph = InteractionGraph::new();
    run(packets, &cfg, overrides, false, |win| {
        graph = win.graph.clone();
        Ok(())
    })?;
    export_graph(&graph, &out).map_err(|e| CliError::Input(e.to_string()))?;
    info!("{} vertices, {} edges written to {}", graph.vertices().len(), graph.edge_count(), out.display());
    Ok(())
}

fn cmd_graph_diff(a: &Path, b: &Path) -> Result<(), CliError> {
    let load = |p: &Path| import_graph(p).map_err(|e| CliError::Input(e.to_string()));
    let (ga, gb) = (load(a)?, load(b)?);
    if ga == gb {
        println!("identical");
        return Ok(());
    }
    let counts = |g: &InteractionGraph| (g.vertices().len(), g.short_edges().len(), g.long_edges().len());
    let (ca, cb) = (counts(&ga), counts(&gb));
    println!("vertices: {} vs {}", ca.0, cb.0);
    println!("short edges: {} vs {}", ca.1, cb.1);
    println!("long edges: {} vs {}", ca.2, cb.2);
    Err(CliError::Check("graphs differ".into()))
}

fn entropy_base(a: &EntropyArgs) -> Result<DtmcParams, CliError> {
    let (_, mut base) = CALIBRATION_PRESETS
        .iter()
        .copied()
        .find(|(name, _)| *name == a.preset)
        .ok_or_else(|| CliError::Config(format!("unknown preset `{}`", a.preset)))?;
    if let Some(s) = a.s {
        base.s = s;
    }
    if let Some(e) = a.e_count {
        base.e_count = e;
    }
    if let Some(k) = a.k {
        base.k_thresh = k;
    }
    if let Some(c) = a.c {
        base.c_agg = c;
    }
    base.validate(false)?;
    Ok(base)
}

fn metrics_row(prm: &DtmcParams) -> Result<Vec<String>, CliError> {
    let m: Vec<_> = Mode::ALL.iter().map(|&mode| mode.metrics(prm)).collect::<Result<_, _>>()?;
    let mut row = vec![prm.p.to_string(), prm.q.to_string()];
    row.extend(m.iter().map(|x| x.h.to_string()));
    row.extend(m.iter().map(|x| x.l.to_string()));
    row.extend(m.iter().map(|x| x.d.to_string()));
    Ok(row)
}

fn metrics_header() -> Vec<String> {
    let mut h = vec!["p".to_string(), "q".to_string()];
    for prefix in ["h", "l", "d"] {
        h.extend(Mode::ALL.iter().map(|m| format!("{prefix}_{}", m.name())));
    }
    h
}

fn cmd_entropy(a: EntropyArgs) -> Result<(), CliError> {
    let base = entropy_base(&a)?;
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(File::create(p).map_err(output_err(p))?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| CliError::Input(format!("writing csv: {e}"));
    let mut did_something = false;

    if let (Some(p), Some(q)) = (a.p, a.q) {
        let prm = base.with_pq(p, q);
        prm.validate(!a.no_region_check)?;
        w.write_record(metrics_header()).map_err(csv_err)?;
        w.write_record(metrics_row(&prm)?).map_err(csv_err)?;
        did_something = true;
    }
    if a.grid {
        w.write_record(metrics_header()).map_err(csv_err)?;
        for i in 0..=a.np {
            for j in 0..=a.nq {
                let prm = base.with_pq(grid_point(P_RANGE, i, a.np), grid_point(Q_RANGE, j, a.nq));
                w.write_record(metrics_row(&prm)?).map_err(csv_err)?;
            }
        }
        did_something = true;
    }
    if a.integrate {
        let values: Vec<f64> =
            Mode::ALL.iter().map(|&m| integrate_density(m, &base, a.grid_n)).collect::<Result<_, _>>()?;
        w.write_record(Mode::ALL.iter().map(|m| format!("integral_d_{}", m.name()))).map_err(csv_err)?;
        w.write_record(values.iter().map(|v| v.to_string())).map_err(csv_err)?;
        w.flush().map_err(|e| CliError::Input(e.to_string()))?;
        let graph = values[1];
        if !(graph > values[0] && graph > values[2] && graph > values[3]) {
            return Err(CliError::Check(format!("graph-mode density integral is not the largest: {values:?}")));
        }
        did_something = true;
    }
    if a.check_dpi {
        let gaps = dpi_gaps(&base, a.np, a.nq)?;
        let (lo, hi) = gaps.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| (lo.min(g.2), hi.max(g.2)));
        eprintln!("ideal minus graph information over {} points: min {lo:.3e}, max {hi:.3e}", gaps.len());
        if let Some(bad) = gaps.iter().find(|g| g.2.is_nan() || g.2 < -1e-9) {
            return Err(CliError::Check(format!("graph mode exceeds ideal at p={}, q={}: gap {}", bad.0, bad.1, bad.2)));
        }
        did_something = true;
    }
    w.flush().map_err(|e| CliError::Input(e.to_string()))?;
    if !did_something {
        return Err(CliError::Config("nothing to do: give --p/--q, --grid, --integrate or --check-dpi".into()));
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<(), CliError> {
    if a.list {
        for s in Scenario::ALL {
            println!("{s}");
        }
        return Ok(());
    }
    let name = a.scenario.as_deref().unwrap_or_default();
    let scenario: Scenario = name.parse().map_err(|e: IngestError| CliError::Config(e.to_string()))?;
    let out = a.out.ok_or_else(|| CliError::Config("--out is required".into()))?;
    let trace = gen_synthetic(scenario, a.seed);
    match a.format {
        Format::Csv => write_csv(&out, &trace.packets)?,
        Format::Pcap => write_pcap(&out, &trace.packets)?,
    }
    write_sidecar(with_suffix(&out, ".labels.csv"), &trace.labels)?;
    info!("{} packets, {} labelled flows written to {}", trace.packets.len(), trace.labels.len(), out.display());
    Ok(())
}
