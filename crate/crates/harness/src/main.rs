use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pgnn_harness::config::{parse_config, ExperimentConfig, ExperimentKind};
use pgnn_harness::error::{HarnessError, EXIT_NUMERICAL};
use pgnn_harness::experiments::analyze_system;
use pgnn_harness::report::fmnist_report;
use pgnn_harness::{aggregate, emit, run, Format};

#[derive(Parser)]
#[command(name = "pgnn", version, about = "Run structured-corrective network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its outputs.
    Run {
        config: PathBuf,
        /// Output directory (replaces `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seed list (replaces `seeds`).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Certify and check every system of a recursive-dynamics config.
    VerifyContraction { config: PathBuf },
    /// Summarize a finished FMNIST run directory as markdown.
    EmitFmnistReport { run_dir: PathBuf },
}

fn load(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_config(&text)
}

fn cmd_run(config: &Path, out: Option<PathBuf>, seeds: Option<Vec<u64>>, format: Format) -> Result<(), HarnessError> {
    let mut cfg = load(config)?;
    let mut overrides = Vec::new();
    if let Some(out) = out {
        cfg.output_dir = out.display().to_string();
        overrides.push(format!("output_dir={}", cfg.output_dir));
    }
    if let Some(seeds) = seeds {
        overrides.push(format!("seeds={seeds:?}"));
        cfg.seeds = seeds;
    }
    cfg.validate()?;
    eprintln!("running {} ({} seeds), fingerprint {}", cfg.kind, cfg.seeds.len(), cfg.fingerprint());
    let mut result = run(&cfg)?;
    result.overrides = overrides;
    let agg = if result.seeds.len() >= 2 {
        Some(aggregate(&result)?)
    } else {
        eprintln!("single seed: skipping aggregation");
        None
    };
    let dir = emit(&result, agg.as_ref(), format, Path::new(&cfg.output_dir))?;
    println!("{}", dir.display());
    Ok(())
}

fn cmd_verify(config: &Path) -> Result<bool, HarnessError> {
    let cfg = load(config)?;
    if cfg.kind != ExperimentKind::RecursiveDynamics {
        return Err(HarnessError::Config {
            path: "kind".into(),
            message: format!("verify-contraction needs a recursive_dynamics config, got {}", cfg.kind),
        });
    }
    let mut all_ok = true;
    for &seed in &cfg.seeds {
        for &system in &cfg.dynamics.systems {
            let rep = analyze_system(system, &cfg.dynamics, seed).map_err(|source| HarnessError::Run {
                kind: cfg.kind,
                seed,
                source,
            })?;
            let c = &rep.certificate;
            let verdict = match rep.verified {
                None => "refused (not certified)".to_string(),
                Some(v) => {
                    all_ok &= v;
                    format!("unique fixed point: {v}")
                }
            };
            let system_name = serde_json::to_value(system).unwrap_or_default();
            println!(
                "seed {seed} {}: L1={:.6} L2={:.6} gamma={:.6} contractive={} {verdict}",
                system_name.as_str().unwrap_or("?"),
                c.l1,
                c.l2,
                c.gamma,
                c.contractive
            );
        }
    }
    Ok(all_ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            out,
            seeds,
            format,
        } => cmd_run(&config, out, seeds, format).map(|_| true),
        Command::VerifyContraction { config } => cmd_verify(&config),
        Command::EmitFmnistReport { run_dir } => fmnist_report(&run_dir).map(|text| {
            print!("{text}");
            true
        }),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_NUMERICAL as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
