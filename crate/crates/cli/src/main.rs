use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use dynwatch::case_io::{
    load_scenario, parse_branch_list, parse_matpower, read_labels, read_scores, save_scenario, write_scores,
    AnomalyKind, CaseFile,
};
use dynwatch::dc::DcEngine;
use dynwatch::detector::{Detector, DetectorConfig, Mode, Weighting};
use dynwatch::distance::{DistanceEngine, DistanceRequest, Measure, DEFAULT_ISLANDING_PENALTY};
use dynwatch::evaluation::{
    evaluate_records, random_specs, scale_bench, validate_infinite_data, validate_theorems, BenchConfig,
};
use dynwatch::grid::Topology;
use dynwatch::simulator::{simulate, ScenarioSpec};
use dynwatch::Error;

/// Topology-aware anomaly detection on power-grid sensor data.
#[derive(Debug, Parser)]
#[command(name = "dynwatch", version)]
struct Cli {
    /// Worker threads [env: DYNWATCH_THREADS; default: all cores]
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for every random draw of the run
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// More log output on stderr (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a scenario bundle from a case file
    Simulate(SimulateArgs),
    /// Score every tick of a scenario bundle
    Detect(DetectArgs),
    /// AUC and top-k F-measure of a score file against labels
    Evaluate(EvaluateArgs),
    /// Line outage distribution factors of a case
    Lodf(LodfArgs),
    /// Distance between two topologies of a case
    Distance(DistanceArgs),
    /// Detection time on chained copies of a case
    Bench(BenchArgs),
    /// Monte-Carlo check of the weighted estimator's error bounds
    ValidateTheorems(TheoremArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    case: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    topologies: usize,
    #[arg(long = "ticks-per", default_value_t = 60)]
    ticks_per: usize,
    #[arg(long, default_value_t = 50)]
    anomalies: usize,
    /// hidden_outage or fdia
    #[arg(long, default_value = "hidden_outage")]
    kind: AnomalyKind,
    /// Load multiplier during an attack
    #[arg(long = "fdia-scale", default_value_t = 0.8)]
    fdia_scale: f64,
    /// Daily load swing in percent
    #[arg(long = "load-variation", default_value_t = 8.0)]
    load_variation: f64,
    /// Noise standard deviation (per-unit)
    #[arg(long, default_value_t = 0.002)]
    noise: f64,
    /// Number of randomly placed sensors [default: min(buses, 40)]
    #[arg(long)]
    sensors: Option<usize>,
    /// Duration of each anomaly in ticks
    #[arg(long = "anomaly-ticks", default_value_t = 1)]
    anomaly_ticks: usize,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// global or local
    #[arg(long, default_value = "global")]
    mode: Mode,
    /// Distance used in global mode
    #[arg(long, default_value = "lodf")]
    measure: Measure,
    /// Most recent history ticks to use [default: all]
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, default_value_t = dynwatch::weighting::DEFAULT_SCALE_FACTOR)]
    scale: f64,
    /// Alarm threshold on the tick score
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long = "top-k", default_value_t = 5)]
    top_k: usize,
    #[arg(long = "iqr-floor", default_value_t = 1e-6)]
    iqr_floor: f64,
    /// Weight all history ticks equally (topology-blind baseline)
    #[arg(long)]
    uniform: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long = "top-k", default_value_t = 50)]
    top_k: usize,
}

#[derive(Debug, Args)]
struct LodfArgs {
    #[arg(long)]
    case: PathBuf,
    /// Report one outage column instead of the full table
    #[arg(long)]
    outage: Option<usize>,
    /// Comma-joined branch ids to switch off, on top of the case's own
    #[arg(long, default_value = "")]
    inactive: String,
}

#[derive(Debug, Args)]
struct DistanceArgs {
    #[arg(long)]
    case: PathBuf,
    /// Inactive branch ids of the first topology, comma-joined
    #[arg(long, default_value = "")]
    a: String,
    /// Inactive branch ids of the second topology, comma-joined
    #[arg(long, default_value = "")]
    b: String,
    #[arg(long, default_value = "lodf")]
    measure: Measure,
    /// Sensor bus number, for lodf-local
    #[arg(long)]
    sensor: Option<usize>,
    #[arg(long = "islanding-penalty", default_value_t = DEFAULT_ISLANDING_PENALTY)]
    islanding_penalty: f64,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    case: PathBuf,
    /// `A..B` or a comma-joined list
    #[arg(long, default_value = "3..12")]
    factors: String,
    #[arg(long, default_value_t = 20)]
    topologies: usize,
    #[arg(long = "ticks-per", default_value_t = 60)]
    ticks_per: usize,
    /// Timed runs per factor (fastest reported)
    #[arg(long, default_value_t = 5)]
    repeats: usize,
}

#[derive(Debug, Args)]
struct TheoremArgs {
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    /// Number of random bound specs
    #[arg(long, default_value_t = 10)]
    specs: usize,
    /// Longest equal-weight history; lengths are the powers of ten up to it
    #[arg(long = "max-t", default_value_t = 10_000)]
    max_t: usize,
}

struct Failure {
    code: u8,
    kind: String,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Input(_) => 1,
            e if e.is_numerical() => 3,
            _ => 2,
        };
        Failure {
            code,
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        kind: "usage".into(),
        message: message.into(),
    }
}

fn emit_error(f: &Failure) -> ExitCode {
    eprintln!("{}", json!({ "error": f.kind, "message": f.message }));
    ExitCode::from(f.code)
}

fn print_json(value: &impl serde::Serialize) -> Result<(), Failure> {
    let s = serde_json::to_string(value).map_err(|e| usage(e.to_string()))?;
    println!("{s}");
    Ok(())
}

fn read_case(path: &Path) -> Result<CaseFile, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure {
        code: 2,
        kind: "io".into(),
        message: format!("{}: {e}", path.display()),
    })?;
    Ok(parse_matpower(&text)?)
}

fn parse_factors(s: &str) -> Result<Vec<usize>, Failure> {
    let bad = || usage(format!("cannot read factors `{s}`; use A..B or a comma list"));
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a == 0 || a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    if v.is_empty() || v.contains(&0) {
        return Err(bad());
    }
    Ok(v)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let seed = cli.seed;
    match cli.command {
        Command::Simulate(a) => {
            let case = read_case(&a.case)?;
            let spec = ScenarioSpec {
                n_topologies: a.topologies,
                ticks_per_topology: a.ticks_per,
                n_anomalies: a.anomalies,
                anomaly_kind: a.kind,
                fdia_scale: a.fdia_scale,
                load_variation_pct: a.load_variation,
                noise_sigma: a.noise,
                seed,
                n_sensors: a.sensors,
                anomaly_ticks: a.anomaly_ticks,
                ..ScenarioSpec::default()
            };
            let sim = simulate(&spec, &case)?;
            save_scenario(&a.out, &sim.scenario)?;
            let positives = sim.scenario.labels.iter().filter(|l| l.is_anomaly).count();
            print_json(&json!({
                "out": a.out.display().to_string(),
                "ticks": sim.scenario.ticks(),
                "sensors": sim.scenario.sensors.len(),
                "anomalies": positives,
            }))
        }
        Command::Detect(a) => {
            let scenario = load_scenario(&a.scenario)?;
            let config = DetectorConfig {
                window: a.window,
                scale_factor: a.scale,
                mode: a.mode,
                measure: a.measure,
                tau: a.tau,
                iqr_floor: a.iqr_floor,
                top_k: a.top_k,
                weighting: if a.uniform { Weighting::Uniform } else { Weighting::Topology },
                islanding_penalty: DEFAULT_ISLANDING_PENALTY,
            };
            let scores = Detector::for_grid(scenario.grid.clone(), config)?.detect(&scenario)?;
            write_scores(&a.out, &scores)?;
            let failed = scores.ticks.iter().filter(|t| t.error.is_some()).count();
            if failed > 0 {
                log::warn!("{failed} ticks recorded errors");
            }
            Ok(())
        }
        Command::Evaluate(a) => {
            let records = read_scores(&a.scores)?;
            let labels = read_labels(&a.labels)?;
            print_json(&evaluate_records(&records, &labels, a.top_k)?)
        }
        Command::Lodf(a) => {
            let case = read_case(&a.case)?;
            let grid = case.to_grid()?;
            let engine = DcEngine::new(grid.clone())?;
            let topo = Topology::base(grid.clone())?.without(&parse_branch_list(&a.inactive)?)?;
            match a.outage {
                Some(k) => {
                    let col = engine.lodf_column(&topo, k)?;
                    print_json(&json!({ "outage": k, "bridge": col.is_bridge(), "lodf": col.values }))
                }
                None => {
                    let table = engine.lodf(&topo)?;
                    let columns: Vec<_> = (0..grid.n_branches()).map(|k| table.column(k)).collect();
                    print_json(&json!({
                        "branches": grid.n_branches(),
                        "bridges": table.bridges(),
                        "columns": columns,
                    }))
                }
            }
        }
        Command::Distance(a) => {
            let case = read_case(&a.case)?;
            let grid = case.to_grid()?;
            let ta = Topology::with_inactive(grid.clone(), &parse_branch_list(&a.a)?)?;
            let tb = Topology::with_inactive(grid.clone(), &parse_branch_list(&a.b)?)?;
            let sensor = a.sensor.map(|n| grid.bus_by_number(n)).transpose()?;
            let engine = DistanceEngine::new(Arc::new(DcEngine::new(grid)?), a.islanding_penalty)?;
            let d = engine.distance(&DistanceRequest {
                topo_a: &ta,
                topo_b: &tb,
                measure: a.measure,
                sensor,
            })?;
            print_json(&json!({ "measure": a.measure.as_str(), "distance": d }))
        }
        Command::Bench(a) => {
            let case = read_case(&a.case)?;
            let config = BenchConfig {
                factors: parse_factors(&a.factors)?,
                scenario: ScenarioSpec {
                    n_topologies: a.topologies,
                    ticks_per_topology: a.ticks_per,
                    n_anomalies: ScenarioSpec::default().n_anomalies.min(a.topologies * a.ticks_per / 4),
                    n_sensors: Some(1),
                    seed,
                    ..ScenarioSpec::default()
                },
                repeats: a.repeats,
                ..BenchConfig::default()
            };
            print_json(&scale_bench(&case, &config)?)
        }
        Command::ValidateTheorems(a) => {
            let reports = random_specs(a.specs, a.trials, seed)
                .iter()
                .map(validate_theorems)
                .collect::<Result<Vec<_>, _>>()?;
            let mut ts = Vec::new();
            let mut t = 10;
            while t <= a.max_t {
                ts.push(t);
                t *= 10;
            }
            if ts.is_empty() {
                return Err(usage("--max-t must be at least 10"));
            }
            let infinite = validate_infinite_data(1.0, 0.0, &ts, a.trials, seed)?;
            print_json(&json!({
                "bounds": reports,
                "all_within_bounds": reports.iter().all(|r| r.within_bounds),
                "infinite_data": infinite,
            }))
        }
    }
}

fn init_threads(flag: Option<usize>) -> Result<(), Failure> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("DYNWATCH_THREADS") {
            Ok(v) if !v.trim().is_empty() => Some(
                v.trim()
                    .parse()
                    .map_err(|_| usage(format!("DYNWATCH_THREADS=`{v}` is not a thread count")))?,
            ),
            _ => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(usage("thread count must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            return emit_error(&usage(first));
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    if let Err(f) = init_threads(cli.threads) {
        return emit_error(&f);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => emit_error(&f),
    }
}
