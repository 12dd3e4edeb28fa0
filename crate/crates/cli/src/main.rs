use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedtrans::config::{parse_config, ExperimentConfig};
use fedtrans::experiment::{compare_modes, run_experiment};
use fedtrans::Error;

/// Federated, differentially-private cycle-GAN translation experiments.
#[derive(Debug, Parser)]
#[command(name = "fedtrans", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Override the config's `seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Override the config's `output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train in the configured mode and write metrics, latent clouds and checkpoints.
    Run { config: PathBuf },
    /// Train `central` and `fed_dp` with matched budgets and write comparison.csv.
    Compare { config: PathBuf },
}

const CONFIG_ERROR: u8 = 1;
const RUNTIME_ERROR: u8 = 2;

fn load(path: &PathBuf, cli: &Cli) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut cfg = parse_config(&text).map_err(|e| e.to_string())?;
    if let Some(seed) = cli.seed {
        cfg.global_seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config { .. } => CONFIG_ERROR,
        _ => RUNTIME_ERROR,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { CONFIG_ERROR } else { 0 });
        }
    };
    let path = match &cli.command {
        Command::Run { config } | Command::Compare { config } => config,
    };
    let cfg = match load(path, &cli) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("config error: {msg}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };

    let result = match &cli.command {
        Command::Run { .. } => run_experiment(&cfg).map(|report| {
            for p in &report.points {
                let [ab, ba] = &p.metrics;
                println!(
                    "{} {:>3}  {} mae {:.4} psnr {:.2} ssim {:.4}  {} mae {:.4} psnr {:.2} ssim {:.4}",
                    if cfg.mode.is_federated() { "round" } else { "epoch" },
                    p.index,
                    ab.direction,
                    ab.mae,
                    ab.psnr,
                    ab.ssim,
                    ba.direction,
                    ba.mae,
                    ba.psnr,
                    ba.ssim
                );
            }
            println!("outputs in {}", report.output_dir.display());
        }),
        Command::Compare { .. } => compare_modes(&cfg).map(|rows| {
            for r in &rows {
                println!(
                    "{:<10} {}  mae {:.4} psnr {:.2} ssim {:.4}",
                    r.mode, r.direction, r.mae, r.psnr, r.ssim
                );
            }
            println!("wrote {}", cfg.output_dir.join("comparison.csv").display());
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
