use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use oraclepriv::learners::{Theorem, TheoremArgs};
use oraclepriv_cli::audits::{audit, AuditKind};
use oraclepriv_cli::config::{master_seed, ExperimentConfig};
use oraclepriv_cli::params::{params_json, parse_theorem};
use oraclepriv_cli::plot::{plot, PlotSpec};
use oraclepriv_cli::run::{run, RunOptions};
use oraclepriv_cli::CliError;

#[derive(Parser)]
#[command(name = "oraclepriv", version, about = "Private learning experiments and audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Master seed, overriding the config and ORACLEPRIV_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a learner sweep and write results.csv.
    Run {
        #[command(flatten)]
        common: Common,
        /// Record wall-clock runtime_ms (results are then not byte-stable).
        #[arg(long)]
        timing: bool,
    },
    /// Run audits and write audit.csv.
    Audit {
        #[command(flatten)]
        common: Common,
        /// Audit kind; repeat for several.
        #[arg(long = "kind", required = true, value_parser = |s: &str| s.parse::<AuditKind>())]
        kinds: Vec<AuditKind>,
        /// Exit with status 2 if any verdict is fail.
        #[arg(long)]
        strict: bool,
    },
    /// Render an SVG chart from a results CSV.
    Plot {
        results: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long)]
        group: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log_x: bool,
        #[arg(long)]
        log_y: bool,
        #[arg(long)]
        title: Option<String>,
    },
    /// Print hyperparameters from a sample-complexity formula as JSON.
    Params {
        #[arg(long, value_parser = parse_theorem)]
        theorem: Theorem,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 0.05)]
        beta: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0)]
        d: f64,
        #[arg(long, default_value_t = 1.0)]
        constant: f64,
    },
}

fn load(common: &Common) -> Result<(ExperimentConfig, u64), CliError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(dir) = &common.output_dir {
        cfg.output_dir = dir.clone();
    }
    let seed = master_seed(common.seed, &cfg)?;
    Ok((cfg, seed))
}

fn execute(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Run { common, timing } => {
            let (cfg, seed) = load(&common)?;
            let opts = RunOptions {
                workers: common.workers,
                timing,
            };
            let path = run(&cfg, seed, &opts)?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Audit { common, kinds, strict } => {
            let (cfg, seed) = load(&common)?;
            let rows = audit(&cfg, &kinds, seed, common.workers)?;
            let mut failed = 0;
            for r in &rows {
                println!(
                    "{:<18} {:<14} {:<12} estimate={} ci=[{}, {}] bound={} trials={}",
                    r.kind, r.instance_id, r.verdict, r.estimate, r.ci_low, r.ci_high, r.bound, r.trials
                );
                failed += usize::from(r.failed());
            }
            println!("wrote {}", cfg.output_dir.join("audit.csv").display());
            if strict && failed > 0 {
                eprintln!("{failed} audit verdict(s) failed");
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot {
            results,
            x,
            y,
            group,
            out,
            log_x,
            log_y,
            title,
        } => {
            let spec = PlotSpec {
                x,
                y,
                group,
                log_x,
                log_y,
                title,
            };
            plot(&results, &spec, &out)?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Params {
            theorem,
            alpha,
            beta,
            epsilon,
            delta,
            sigma,
            lambda,
            d,
            constant,
        } => {
            let args = TheoremArgs {
                alpha,
                beta,
                epsilon,
                delta,
                sigma,
                lambda,
                d,
                constant,
            };
            println!("{}", params_json(theorem, &args)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
