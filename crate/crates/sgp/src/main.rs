use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sgp::checkpoint::read_memory;
use sgp::config::{ExperimentConfig, MethodName, OptimizerName, Overrides};
use sgp::dump::encode_sequence;
use sgp::experiment::{run_experiment, write_file_atomic};
use sgp::report::{histogram_csv, layer_reports, memory_report_csv};
use sgp::{Error, Result};
use sgp_core::trainer::compute_metrics;

#[derive(Parser)]
#[command(name = "sgp", version, about = "Continual learning with scaled gradient projection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured method on the same task sequence.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        alpha: Option<f64>,
        /// One threshold for all layers or a comma-separated list per layer.
        #[arg(long, value_delimiter = ',')]
        epsilon_th: Option<Vec<f64>>,
        /// Comma-separated subset of sgp, gpm, finetune.
        #[arg(long, value_delimiter = ',')]
        method: Option<Vec<String>>,
        /// sgd, adam-gp or adam-preprojected.
        #[arg(long)]
        optimizer: Option<String>,
        #[arg(long, env = "SGP_OUT_DIR")]
        out: Option<PathBuf>,
    },
    /// Report basis counts and importance distributions of memory checkpoints.
    InspectMemory {
        #[arg(required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        /// Directory for memory_report.csv and importance_histogram.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the configured dataset as a binary sequence dump.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(
    config: &Path,
    overrides: Overrides,
) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    cfg.apply(&overrides);
    let out = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let outcomes = run_experiment(&cfg, &out)?;
    println!("{:<10} {:>8} {:>8}", "method", "acc", "bwt");
    for o in &outcomes {
        let m = compute_metrics(&o.result.accuracy)?;
        let bwt = m.bwt.map_or_else(|| "-".to_string(), |b| format!("{b:.4}"));
        println!("{:<10} {:>8.4} {:>8}", o.method.method().name(), m.acc, bwt);
    }
    println!("outputs in {}", out.display());
    Ok(())
}

fn inspect(checkpoints: &[PathBuf], bins: usize, out: Option<&Path>) -> Result<()> {
    if bins == 0 {
        return Err(Error::Config("--bins must be positive".into()));
    }
    let mut rows = Vec::new();
    for path in checkpoints {
        let ckpt = read_memory(path)?;
        let reports = layer_reports(&ckpt.memory, bins);
        println!("{} (after {} tasks)", path.display(), ckpt.tasks_seen);
        println!("  {:>5} {:>6} {:>6} {:>9} {:>9}", "layer", "dim", "bases", "λ=1", "fraction");
        for r in &reports {
            println!(
                "  {:>5} {:>6} {:>6} {:>9} {:>9.4}",
                r.layer, r.dim, r.bases, r.saturated, r.saturated_fraction
            );
        }
        rows.push((path.display().to_string(), ckpt.tasks_seen, reports));
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file_atomic(&dir.join("memory_report.csv"), &memory_report_csv(&rows)?)?;
        write_file_atomic(&dir.join("importance_histogram.csv"), &histogram_csv(&rows)?)?;
    }
    Ok(())
}

fn gen_data(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    cfg.apply(&Overrides {
        seed,
        ..Overrides::default()
    });
    cfg.validate()?;
    let seq = cfg.load_sequence()?;
    write_file_atomic(out, &encode_sequence(&seq)?)?;
    println!("{} tasks ({}) written to {}", seq.tasks.len(), seq.provenance, out.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            alpha,
            epsilon_th,
            method,
            optimizer,
            out,
        } => {
            let methods = method
                .map(|ms| ms.iter().map(|m| MethodName::parse(m)).collect::<Result<Vec<_>>>())
                .transpose()?;
            let optimizer = optimizer.as_deref().map(OptimizerName::parse).transpose()?;
            run(
                &config,
                Overrides {
                    seed,
                    alpha,
                    epsilon_th,
                    methods,
                    optimizer,
                    out_dir: out,
                },
            )
        }
        Command::InspectMemory { checkpoints, bins, out } => inspect(&checkpoints, bins, out.as_deref()),
        Command::GenData { config, seed, out } => gen_data(&config, seed, &out),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
