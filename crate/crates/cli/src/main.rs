mod artifacts;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use plcbf::scenarios::{run_analysis, run_bench, run_scenario, ScenarioConfig};
use plcbf::Workers;

use artifacts::{Provenance, Writer};

#[derive(Debug, Parser)]
#[command(name = "plcbf", version, about = "Policy-library CBF safety filter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured scenario and write logs, coverage maps and a summary.
    Run(RunArgs),
    /// Sampled completeness check for the config's `analysis` block.
    Analyze(RunArgs),
    /// Filter-step latency and parallel speedup.
    Bench(RunArgs),
    /// Check a config without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: the config's `output`, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Keep every policy's rollout trajectory in the logs.
    #[arg(long)]
    retain_trajectories: bool,
}

const CONFIG_ERROR: u8 = 2;
const RUNTIME_ERROR: u8 = 3;

enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn report(self) -> ExitCode {
        match self {
            Failure::Config(m) => {
                eprintln!("config error: {m}");
                ExitCode::from(CONFIG_ERROR)
            }
            Failure::Runtime(m) => {
                eprintln!("runtime error: {m}");
                ExitCode::from(RUNTIME_ERROR)
            }
        }
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let cfg = ScenarioConfig::from_json(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    cfg.prepare().map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

fn setup(args: &RunArgs) -> Result<(ScenarioConfig, Workers, Writer), Failure> {
    let mut cfg = load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.retain_trajectories {
        cfg.filter.retain_trajectories = true;
    }
    let workers = match args.workers {
        Some(n) => Workers::new(n),
        None => Workers::available(),
    }
    .map_err(|e| Failure::Runtime(e.to_string()))?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let writer = Writer::new(out, Provenance::of(&cfg)).map_err(|e| Failure::Runtime(e.to_string()))?;
    writer.json("config.json", &cfg).map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok((cfg, workers, writer))
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let (cfg, workers, writer) = setup(args)?;
    let outcome = run_scenario(&cfg, &workers).map_err(|e| Failure::Runtime(e.to_string()))?;
    let summary = artifacts::write_outcome(&writer, &cfg, &outcome).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("{summary}");
    println!("artifacts in {}", writer.dir().display());
    Ok(())
}

fn analyze(args: &RunArgs) -> Result<(), Failure> {
    let (cfg, workers, writer) = setup(args)?;
    if cfg.analysis.is_none() {
        return Err(Failure::Config("config has no `analysis` block".into()));
    }
    let report = run_analysis(&cfg, &workers).map_err(|e| Failure::Runtime(e.to_string()))?;
    writer.json("completeness.json", &report).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!(
        "certified={} delta_hat={} threshold={} (gamma*={} L_h={})",
        report.certified, report.delta_hat, report.threshold, report.gamma_star, report.lipschitz
    );
    if let Some(w) = &report.witness {
        println!(
            "witness: {} -> {} at distance {}, library clearance {}",
            w.family_sample, w.library_policy, w.distance, w.library_value
        );
    }
    if let Some(r) = &report.reason {
        println!("reason: {r}");
    }
    Ok(())
}

fn bench(args: &RunArgs) -> Result<(), Failure> {
    let (cfg, workers, writer) = setup(args)?;
    let report = run_bench(&cfg, &workers).map_err(|e| Failure::Runtime(e.to_string()))?;
    writer.json("bench.json", &report).map_err(|e| Failure::Runtime(e.to_string()))?;
    let ms = |v: Option<f64>| v.map(|s| format!("{:.3} ms", s * 1e3)).unwrap_or_else(|| "n/a".into());
    println!(
        "filter_step: n={} median={} p95={}",
        report.filter_step.n,
        ms(report.filter_step.median),
        ms(report.filter_step.p95)
    );
    if let Some(s) = &report.speedup {
        println!(
            "batch of {}: speedup {:.2}x at {} workers (bitwise equal: {})",
            s.batch, s.speedup, s.workers, s.bitwise_equal
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::Analyze(a) => analyze(a),
        Command::Bench(a) => bench(a),
        Command::Validate { config } => load(config).map(|c| println!("{}: ok ({})", config.display(), c.name)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
