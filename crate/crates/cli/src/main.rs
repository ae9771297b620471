//! `harp`: generate history, tune and simulate transfers from the shell.
//!
//! Exit codes: 0 on success, 1 when the tuner or simulator rejects the
//! request, 2 for bad arguments or unreadable files.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use harp_core::experiment::{compare, format_compare, parse_manifest, run_strategy, traffic_preset};
use harp_core::history::HistoryStore;
use harp_core::online::{write_decision_log, OnlineConfig};
use harp_core::scheduler::{adaptive_sample, cost_table, heuristic_params, Harp, HarpConfig, Strategy};
use harp_core::simnet::{
    default_param_grid, generate_history, load_scenario, simulate_transfer, HistoryGenOptions, ScenarioFile,
    SimExecutor, SimResult, SimScenario,
};
use harp_core::types::{Chunk, HistoryEntry, ParamTriple};

#[derive(Parser)]
#[command(name = "harp", version, about = "Transfer parameter tuning on a simulated network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the parameter grid over a scenario's datasets and write history.
    GenerateHistory {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sample every chunk and print the tuned parameters.
    Optimize {
        #[arg(long)]
        history: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        /// `adaptive`, or `given:cc,p,pp=bits_per_second`
        #[arg(long, default_value = "adaptive")]
        probe: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one strategy, or a fixed plan, and report aggregate throughput.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// `auto`, or a file with one `cc p pp` line per chunk
        #[arg(long, default_value = "auto")]
        plan: String,
        #[arg(long, default_value = "harp")]
        strategy: String,
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        online: bool,
        #[arg(long)]
        traffic: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write `t_s,throughput_bps,flows` here
        #[arg(long)]
        timeline: Option<PathBuf>,
        /// Write the online decision log here
        #[arg(long)]
        decisions: Option<PathBuf>,
    },
    /// Run several strategies on the same scenario and dataset.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "harp,go,sc,promc,pcp")]
        strategies: Vec<String>,
        #[arg(long)]
        traffic: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the minimum dataset size for which sampling pays off.
    CostTable {
        #[arg(long, default_value_t = 15.0)]
        sample_time: f64,
        #[arg(long, default_value_t = 0.0)]
        optimizer_cost: f64,
    },
    /// Print the fitted models for every chunk as JSON lines.
    Inspect {
        #[arg(long)]
        history: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
    },
}

enum CliError {
    /// Bad arguments or files.
    Usage(String),
    /// The request was understood but could not be carried out.
    Domain(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Domain(m) => f.write_str(m),
        }
    }
}

impl From<harp_core::Error> for CliError {
    fn from(e: harp_core::Error) -> Self {
        use harp_core::Error as E;
        match e {
            E::Io(_) | E::Parse { .. } | E::InvalidScenario(_) | E::InvalidFile { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn scenario_file(path: &Path, seed: Option<u64>, traffic: Option<&str>) -> CliResult<ScenarioFile> {
    let mut f = load_scenario(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        f.scenario.seed = s;
    }
    if let Some(t) = traffic {
        let bg = traffic_preset(t).map_err(|e| CliError::Usage(e.to_string()))?;
        f.scenario = f.scenario.with_constant_traffic(bg);
    }
    Ok(f)
}

fn manifest(path: &Path, scenario: &SimScenario) -> CliResult<Vec<Chunk>> {
    parse_manifest(&read(path)?, &scenario.network).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn history(path: &Path) -> CliResult<Vec<HistoryEntry>> {
    let store = HistoryStore::load(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(store.entries().to_vec())
}

fn optional_history(path: Option<&Path>, needed: bool) -> CliResult<Vec<HistoryEntry>> {
    match path {
        Some(p) => history(p),
        None if needed => Err(CliError::Usage("the tuner needs --history".into())),
        None => Ok(Vec::new()),
    }
}

fn strategy(name: &str) -> CliResult<Strategy> {
    name.parse().map_err(|e: harp_core::Error| CliError::Usage(e.to_string()))
}

fn gbps(bps: f64) -> String {
    format!("{:.3} Gbps", bps / 1e9)
}

/// `given:cc,p,pp=bits_per_second`
fn parse_given_probe(spec: &str) -> CliResult<(ParamTriple, f64)> {
    let bad = || CliError::Usage(format!("bad probe {spec:?}, expected adaptive or given:cc,p,pp=bps"));
    let rest = spec.strip_prefix("given:").ok_or_else(bad)?;
    let (params, thr) = rest.split_once('=').ok_or_else(bad)?;
    let v: Vec<u32> = params
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| bad()))
        .collect::<CliResult<_>>()?;
    let [cc, p, pp] = v[..] else {
        return Err(bad());
    };
    let thr: f64 = thr.trim().parse().map_err(|_| bad())?;
    if !(thr.is_finite() && thr > 0.0) {
        return Err(bad());
    }
    let params = ParamTriple::new(cc, p, pp).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok((params, thr))
}

fn read_plan(path: &Path, chunks: &[Chunk]) -> CliResult<Vec<(Chunk, ParamTriple)>> {
    let text = read(path)?;
    let mut params = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<u32> = line
            .split_whitespace()
            .map(|x| x.parse())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::Usage(format!("{}:{}: expected \"cc p pp\"", path.display(), i + 1)))?;
        let [cc, p, pp] = v[..] else {
            return Err(CliError::Usage(format!("{}:{}: expected \"cc p pp\"", path.display(), i + 1)));
        };
        params.push(ParamTriple::new(cc, p, pp).map_err(|e| CliError::Usage(e.to_string()))?);
    }
    if params.len() != chunks.len() {
        return Err(CliError::Usage(format!(
            "plan has {} lines for {} chunks",
            params.len(),
            chunks.len()
        )));
    }
    Ok(chunks.iter().cloned().zip(params).collect())
}

fn write_timeline(path: &Path, result: &SimResult) -> CliResult<()> {
    let mut f = io::BufWriter::new(fs::File::create(path)?);
    result.write_timeline_csv(&mut f)?;
    f.flush()?;
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::GenerateHistory {
            scenario,
            out: path,
            repeats,
            seed,
        } => {
            let f = scenario_file(&scenario, seed, None)?;
            let datasets = f.sweep_chunks()?;
            let options = HistoryGenOptions {
                source: f.source.clone(),
                destination: f.destination.clone(),
                seed: f.scenario.seed,
                ..HistoryGenOptions::default()
            };
            let entries = generate_history(&[f.scenario], &datasets, &default_param_grid(), repeats, &options)?;
            HistoryStore::from_entries(entries.clone())?.save(&path)?;
            writeln!(out, "wrote {} entries to {}", entries.len(), path.display())?;
        }
        Command::Optimize {
            history: h,
            manifest: m,
            scenario,
            probe,
            seed,
        } => {
            let f = scenario_file(&scenario, seed, None)?;
            let chunks = manifest(&m, &f.scenario)?;
            let entries = history(&h)?;
            let given = match probe.as_str() {
                "adaptive" => None,
                other => Some(parse_given_probe(other)?),
            };
            let harp = Harp::new(&entries, HarpConfig::default());
            let network = f.scenario.network;
            let mut ex = SimExecutor::new(f.scenario.clone(), 0.0)?;
            for (i, chunk) in chunks.iter().enumerate() {
                let (probe_params, thr) = match given {
                    Some(g) => g,
                    None => {
                        let p = heuristic_params(chunk, &network, &harp.config.bounds);
                        let s = adaptive_sample(&mut ex, chunk, p, &harp.config.sampling)?;
                        (p, s.throughput)
                    }
                };
                let models = harp.models_for(chunk, &network)?;
                writeln!(
                    out,
                    "chunk {i} {} files={} probe {probe_params} at {}",
                    chunk.chunk_type,
                    chunk.file_count(),
                    gbps(thr)
                )?;
                writeln!(
                    out,
                    "  similar entries {} threshold {} groups {} kept {} rejected {}{}",
                    models.similar,
                    models.threshold.map_or("-".into(), |t| format!("{t:.2}")),
                    models.groups,
                    models.models.len(),
                    models.rejected,
                    if models.warning { " (fewer similar entries than wanted)" } else { "" }
                )?;
                match harp.decide(&models, probe_params, thr)? {
                    Some(r) => {
                        writeln!(
                            out,
                            "  params {} estimated {} unit {}",
                            r.params,
                            gbps(r.estimated_throughput),
                            gbps(r.unit_throughput)
                        )?;
                        for pm in &r.per_model {
                            writeln!(
                                out,
                                "    model {} weight {} residual {} optimum {} relaxed {}",
                                pm.group_id,
                                pm.weight,
                                gbps(pm.epsilon),
                                pm.optimum,
                                pm.relaxed
                            )?;
                        }
                    }
                    None => {
                        let p = heuristic_params(chunk, &network, &harp.config.bounds);
                        writeln!(out, "  no usable model, heuristic {p}")?;
                    }
                }
            }
        }
        Command::Simulate {
            scenario,
            manifest: m,
            plan,
            strategy: s,
            history: h,
            online,
            traffic,
            seed,
            timeline,
            decisions,
        } => {
            let f = scenario_file(&scenario, seed, traffic.as_deref())?;
            let chunks = manifest(&m, &f.scenario)?;
            if plan != "auto" {
                let work = read_plan(Path::new(&plan), &chunks)?;
                let r = simulate_transfer(&work, &f.scenario, 0.0)?;
                writeln!(out, "plan {} aggregate {} in {:.1}s", plan, gbps(r.aggregate_throughput), r.duration)?;
                if let Some(p) = timeline {
                    write_timeline(&p, &r)?;
                }
                return Ok(());
            }
            let strat = strategy(&s)?;
            let entries = optional_history(h.as_deref(), strat == Strategy::Harp)?;
            let oc = OnlineConfig::default();
            let run = run_strategy(
                strat,
                &f.scenario,
                &chunks,
                &entries,
                &HarpConfig::default(),
                online.then_some(&oc),
            )?;
            let label = if online { format!("{strat}+online") } else { strat.to_string() };
            writeln!(
                out,
                "{label} aggregate {} in {:.1}s",
                gbps(run.report.throughput()),
                run.report.duration()
            )?;
            for (t, p) in &run.report.params {
                writeln!(out, "  {t} {p}")?;
            }
            if let Some(p) = timeline {
                let r = SimResult::from_parts(run.report.bytes, run.report.start, run.report.end, run.timeline.clone());
                write_timeline(&p, &r)?;
            }
            if let Some(p) = decisions {
                let mut w = io::BufWriter::new(fs::File::create(&p)?);
                write_decision_log(&run.decisions, &mut w)?;
                w.flush()?;
            }
        }
        Command::Compare {
            scenario,
            manifest: m,
            history: h,
            strategies,
            traffic,
            seed,
        } => {
            let f = scenario_file(&scenario, seed, traffic.as_deref())?;
            let chunks = manifest(&m, &f.scenario)?;
            let list: Vec<Strategy> = strategies.iter().map(|s| strategy(s)).collect::<CliResult<_>>()?;
            if list.is_empty() {
                return Err(CliError::Usage("no strategies given".into()));
            }
            let entries = optional_history(h.as_deref(), list.contains(&Strategy::Harp))?;
            let rows = compare(&list, &f.scenario, &chunks, &entries, &HarpConfig::default())?;
            write!(out, "{}", format_compare(&rows))?;
        }
        Command::CostTable {
            sample_time,
            optimizer_cost,
        } => {
            if !(sample_time > 0.0 && optimizer_cost >= 0.0) {
                return Err(CliError::Usage("sample time must be positive and optimizer cost non-negative".into()));
            }
            writeln!(out, "{:>8} {:>9} {:>10}", "speedup", "slowdown", "min_size")?;
            for (s, d, x) in cost_table(sample_time, optimizer_cost) {
                writeln!(
                    out,
                    "{:>7.0}% {:>8.0}% {:>6.0} x Thr0",
                    s * 100.0,
                    d * 100.0,
                    x.round()
                )?;
            }
        }
        Command::Inspect {
            history: h,
            manifest: m,
            scenario,
        } => {
            let f = scenario_file(&scenario, None, None)?;
            let chunks = manifest(&m, &f.scenario)?;
            let entries = history(&h)?;
            let harp = Harp::new(&entries, HarpConfig::default());
            for chunk in &chunks {
                for model in harp.models_for(chunk, &f.scenario.network)?.models {
                    let line = serde_json::to_string(&model).map_err(|e| CliError::Domain(e.to_string()))?;
                    writeln!(out, "{line}")?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
