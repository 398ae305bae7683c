use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gasper_confirm::confirmation::ConfirmationRule;
use gasper_confirm::monitors::MonitorReport;
use gasper_confirm::simnet::{self, ScenarioConfig, Simulation};
use gasper_confirm::sweep;
use gasper_confirm::trace::SimulationTrace;

/// Deterministic Gasper fork-choice and block-confirmation simulator.
#[derive(Parser)]
#[command(name = "gasper-confirm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace.jsonl, report.json and summary.csv.
    Run(RunArgs),
    /// Rebuild and run a named counterexample scenario.
    Replay(ReplayArgs),
    /// Fan a scenario family across seeds (and optionally assumed betas).
    Sweep(SweepArgs),
    /// Re-run the monitors offline over an existing trace.
    Check(CheckArgs),
    /// Emit the per-block confirmation/finalization latency table.
    Latency(LatencyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Seed override (falls back to GASPER_CONFIRM_SEED, then the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict the evaluated rules (lmd|hfc|churn|appendix), repeatable.
    #[arg(long = "rule", value_parser = parse_rule)]
    rules: Vec<ConfirmationRule>,
    /// Horizon override, in slots.
    #[arg(long)]
    horizon_slots: Option<i64>,
    #[arg(long)]
    out: PathBuf,
    /// Fail (exit 1) when any confirmation relied on void assumptions.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct ReplayArgs {
    /// Which construction to replay: gj-weight or non-monotone-q.
    #[arg(long, value_parser = parse_counterexample)]
    name: simnet::CounterexampleName,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Base scenario; omitted, the built-in adversarial matrix runs.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed range "A..B" (half-open) or a single count "N" (meaning 0..N).
    #[arg(long, default_value = "0..20")]
    seeds: String,
    /// Assumed-beta levels to cross with the seeds, e.g. "0,1/20,1/10".
    #[arg(long)]
    betas: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct CheckArgs {
    /// An existing trace.jsonl.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct LatencyArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_rule(s: &str) -> Result<ConfirmationRule, String> {
    s.parse()
}

fn parse_counterexample(s: &str) -> Result<simnet::CounterexampleName, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Run(args) => run_cmd(args),
        Command::Replay(args) => replay_cmd(args),
        Command::Sweep(args) => sweep_cmd(args),
        Command::Check(args) => check_cmd(args),
        Command::Latency(args) => latency_cmd(args),
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn env_seed() -> Option<u64> {
    std::env::var("GASPER_CONFIRM_SEED").ok().and_then(|s| s.parse().ok())
}

fn write_outputs(
    out: &Path,
    trace: &SimulationTrace,
    report: &MonitorReport,
) -> Result<(), String> {
    fs::create_dir_all(out).map_err(|e| e.to_string())?;
    fs::write(out.join("trace.jsonl"), trace.to_jsonl()).map_err(|e| e.to_string())?;
    fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(report).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    fs::write(out.join("summary.csv"), report.summary_csv()).map_err(|e| e.to_string())?;
    Ok(())
}

fn verdict(report: &MonitorReport, strict: bool) -> ExitCode {
    let ok = if strict { report.strict_pass } else { report.pass };
    println!(
        "monitors: safety_violations={} monotonicity_violations={} property_violations={} (checked {}, void {})",
        report.safety.values().map(|f| f.violations.len()).sum::<usize>(),
        report.monotonicity.values().map(|f| f.violations.len()).sum::<usize>(),
        report.properties.violations.len(),
        report.safety.values().map(|f| f.checked_confirmations).sum::<usize>(),
        report.safety.values().map(|f| f.void_confirmations).sum::<usize>(),
    );
    if ok {
        println!("verdict: pass");
        ExitCode::SUCCESS
    } else {
        println!("verdict: fail");
        ExitCode::from(1)
    }
}

fn run_cmd(args: RunArgs) -> Result<ExitCode, String> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed.or_else(env_seed) {
        config.seed = seed;
    }
    if !args.rules.is_empty() {
        config.rules = args.rules;
    }
    if let Some(h) = args.horizon_slots {
        config.horizon_slots = h;
    }
    let trace = Simulation::run(&config).map_err(|e| e.to_string())?;
    let report = MonitorReport::build(&trace)?;
    write_outputs(&args.out, &trace, &report)?;
    println!("wrote {}", args.out.display());
    Ok(verdict(&report, args.strict))
}

fn replay_cmd(args: ReplayArgs) -> Result<ExitCode, String> {
    let trace = simnet::replay_counterexample(args.name).map_err(|e| e.to_string())?;
    let report = MonitorReport::build(&trace)?;
    write_outputs(&args.out, &trace, &report)?;
    println!(
        "replay: raw_safe_flips={} gj_weight_divergences={}",
        report.raw_safe_flips, report.gj_weight_divergences
    );
    println!("wrote {}", args.out.display());
    Ok(verdict(&report, args.strict))
}

fn parse_seeds(spec: &str) -> Result<std::ops::Range<u64>, String> {
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.parse().map_err(|_| format!("bad seed range '{spec}'"))?;
        let b: u64 = b.parse().map_err(|_| format!("bad seed range '{spec}'"))?;
        Ok(a..b)
    } else {
        let n: u64 = spec.parse().map_err(|_| format!("bad seed count '{spec}'"))?;
        Ok(0..n)
    }
}

fn sweep_cmd(args: SweepArgs) -> Result<ExitCode, String> {
    let seeds = parse_seeds(&args.seeds)?;
    let configs = match &args.config {
        Some(path) => {
            let base = load_config(path)?;
            let betas: Vec<String> = args
                .betas
                .as_deref()
                .map(|b| b.split(',').map(|s| s.trim().to_string()).collect())
                .unwrap_or_default();
            sweep::matrix_configs(&base, seeds, &betas)
        }
        None => sweep::adversarial_sweep_configs(seeds.end.saturating_sub(seeds.start)),
    };
    let results = sweep::run_sweep(&configs).map_err(|e| e.to_string())?;
    let rows: Vec<_> = results.iter().map(|(r, _)| r.clone()).collect();
    fs::create_dir_all(&args.out).map_err(|e| e.to_string())?;
    fs::write(args.out.join("sweep.csv"), sweep::sweep_csv(&rows)).map_err(|e| e.to_string())?;
    let failures = rows
        .iter()
        .filter(|r| if args.strict { !r.strict_pass } else { !r.pass })
        .count();
    println!("{} runs, {} failures; wrote {}", rows.len(), failures, args.out.display());
    Ok(if failures == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn check_cmd(args: CheckArgs) -> Result<ExitCode, String> {
    let text = fs::read_to_string(&args.trace).map_err(|e| e.to_string())?;
    let trace = SimulationTrace::from_jsonl(&text)?;
    let report = MonitorReport::build(&trace)?;
    if let Some(out) = &args.out {
        fs::create_dir_all(out).map_err(|e| e.to_string())?;
        fs::write(
            out.join("report.json"),
            serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        fs::write(out.join("summary.csv"), report.summary_csv()).map_err(|e| e.to_string())?;
    }
    Ok(verdict(&report, args.strict))
}

fn latency_cmd(args: LatencyArgs) -> Result<ExitCode, String> {
    let text = fs::read_to_string(&args.trace).map_err(|e| e.to_string())?;
    let trace = SimulationTrace::from_jsonl(&text)?;
    let report = MonitorReport::build(&trace)?;
    let csv = report.summary_csv();
    match &args.out {
        Some(out) => {
            fs::create_dir_all(out).map_err(|e| e.to_string())?;
            fs::write(out.join("summary.csv"), &csv).map_err(|e| e.to_string())?;
            println!("wrote {}", out.join("summary.csv").display());
        }
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}
