use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dfsim::dsl::{check, parse_source, print_program, Binding};
use dfsim::skeleton::reference::reference_audit;
use dfsim::skeleton::skeletonize;
use dfsim::{audit, AuditError, AuditReport, ExperimentConfig, ValidatedProgram};

/// Packet-level dragonfly simulator.
#[derive(Parser)]
#[command(name = "dfsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its metrics.
    Run {
        /// Experiment config or the manifest of an earlier run.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write trace.csv.
        #[arg(long)]
        trace: bool,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Audit a workload's skeleton under zero-latency execution.
    Validate {
        /// Shipped workload name or a path to a .u file.
        workload: String,
        #[arg(long)]
        ranks: Option<u32>,
        /// Parameter override, e.g. `--param reps=10`.
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, i64)>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Golden audit CSV to compare against.
        #[arg(long)]
        expect: Option<PathBuf>,
        /// Print the report as CSV.
        #[arg(long)]
        csv: bool,
        /// Cross-check against the reference interpreter of the source.
        #[arg(long)]
        reference: bool,
    },
    /// Parse a .u file and print it back in canonical form.
    ParseCheck {
        file: PathBuf,
        #[arg(long, short)]
        quiet: bool,
    },
}

fn parse_param(s: &str) -> Result<(String, i64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let v = v.trim().parse().map_err(|_| format!("`{v}` is not an integer"))?;
    Ok((k.trim().to_string(), v))
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, trace, out } => run(&config, seed, trace, out.as_deref()),
        Command::Validate { workload, ranks, params, seed, expect, csv, reference } => {
            validate(&workload, ranks, params.into_iter().collect(), seed, expect.as_deref(), csv, reference)
        }
        Command::ParseCheck { file, quiet } => parse_check(&file, quiet),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("dfsim: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(config: &Path, seed: Option<u64>, trace: bool, out: Option<&Path>) -> Result<(), Failure> {
    let exp = |e: dfsim::ExperimentError| fail(e.exit_code() as u8, e.to_string());
    let mut cfg = ExperimentConfig::load(config).map_err(exp)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (dir, result) = cfg.run_to_dir(out, trace).map_err(exp)?;
    let s = &result.summary;
    println!("wrote {}", dir.display());
    println!("simulated {} ns, trace {}", s.end_time_ns, result.output.trace_hash);
    for note in &result.placement.fallbacks {
        println!("placement fallback: {note}");
    }
    for a in &s.apps {
        let max = a.latency_box.map_or(0.0, |b| b.max);
        println!(
            "{:<12} messages {:>9}  max latency {:>12} ns  max comm {:>14} ns",
            a.label, a.totals.messages_delivered, max, a.max_comm_ns
        );
    }
    println!("global link share {:.4}", s.global_fraction);
    Ok(())
}

fn load_program(workload: &str, ranks: Option<u32>, params: &Binding, seed: u64) -> Result<ValidatedProgram, Failure> {
    let dsl = |e: dfsim::DslError| fail(2, e.to_string());
    if workload.ends_with(".u") || Path::new(workload).exists() {
        let src = fs::read_to_string(workload).map_err(|e| fail(2, format!("{workload}: {e}")))?;
        let ranks = ranks.ok_or_else(|| fail(2, "--ranks is required for workload files"))?;
        Ok(check(&parse_source(&src).map_err(dsl)?, ranks, params).map_err(dsl)?.with_seed(seed))
    } else {
        let spec = dfsim::workloads::find(workload).ok_or_else(|| {
            let names: Vec<_> = dfsim::WORKLOADS.iter().map(|w| w.name).collect();
            fail(2, format!("no workload named `{workload}` (available: {})", names.join(", ")))
        })?;
        spec.validate(ranks, params, seed).map_err(dsl)
    }
}

fn validate(
    workload: &str,
    ranks: Option<u32>,
    params: Binding,
    seed: u64,
    expect: Option<&Path>,
    csv: bool,
    reference: bool,
) -> Result<(), Failure> {
    let v = load_program(workload, ranks, &params, seed)?;
    let name = Path::new(workload).file_stem().map_or(workload.to_string(), |s| s.to_string_lossy().into_owned());
    let program = skeletonize(&name, &v).map_err(|e| fail(2, e.to_string()))?;
    let report = audit(&program).map_err(|e| match e {
        AuditError::DeadlockDetected { .. } => fail(3, e.to_string()),
        AuditError::MatchError { .. } => fail(4, e.to_string()),
    })?;
    if csv {
        print!("{}", report.to_csv());
    } else {
        print!("{report}");
    }
    if reference {
        let other = reference_audit(&name, &v).map_err(|e| fail(2, e.to_string()))?;
        let mut diffs = report.diff(&other);
        if report.digests != other.digests {
            diffs.push("per-rank operation sequences differ".into());
        }
        if !diffs.is_empty() {
            return Err(fail(4, format!("skeleton and reference audits differ:\n  {}", diffs.join("\n  "))));
        }
        println!("reference interpreter agrees");
    }
    if let Some(path) = expect {
        let text = fs::read_to_string(path).map_err(|e| fail(2, format!("{}: {e}", path.display())))?;
        let golden = AuditReport::from_csv(&text).map_err(|e| fail(2, format!("{}: {e}", path.display())))?;
        let diffs = report.diff(&golden);
        if !diffs.is_empty() {
            return Err(fail(4, format!("audit differs from {}:\n  {}", path.display(), diffs.join("\n  "))));
        }
        println!("matches {}", path.display());
    }
    Ok(())
}

fn parse_check(file: &Path, quiet: bool) -> Result<(), Failure> {
    let src = fs::read_to_string(file).map_err(|e| fail(2, format!("{}: {e}", file.display())))?;
    let program = parse_source(&src).map_err(|e| fail(2, format!("{}: {e}", file.display())))?;
    if quiet {
        println!("{}: ok", file.display());
    } else {
        print!("{}", print_program(&program));
    }
    Ok(())
}
