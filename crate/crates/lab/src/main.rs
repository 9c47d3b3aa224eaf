//! `vahedge`: command-line driver for the hedging lab.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use vahedge::commands::{self, ONLINE_BENCHMARKS};
use vahedge::{HedgerKind, Parallel, RunConfig};

#[derive(Parser)]
#[command(name = "vahedge", version, about = "Hedging lab for GMMB variable annuities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; must exist. Defaults to `output.dir` of the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the top-level seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Evaluation threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Overrides the number of evaluation scenarios (per update for `online`).
    #[arg(long, global = true)]
    scenarios: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the rider-charge rate that makes the initial net liability zero.
    Calibrate {
        /// Store the result as `actuarial.rider_rate` in the config file.
        #[arg(long)]
        write: bool,
    },
    /// Train the agent with PPO; `--weights` resumes from a weight file.
    Train {
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Evaluate one hedger with frozen weights.
    Evaluate {
        #[arg(long, value_enum)]
        hedger: HedgerKind,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Agent against Delta hedgers on common scenarios (all four when `--hedger` is absent).
    Compare {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, value_enum)]
        hedger: Option<HedgerKind>,
    },
    /// Online learning in the live market with rolling evaluation.
    Online {
        #[arg(long)]
        weights: PathBuf,
        /// Keep the weights frozen.
        #[arg(long)]
        no_learning: bool,
    },
    /// Retrain and evaluate under each configured parameter override.
    Sensitivity,
}

fn run(cli: Cli) -> Result<()> {
    let config_path = cli.config.clone();
    let mut cfg = match &config_path {
        Some(p) => RunConfig::load(p)?,
        None => anyhow::bail!("--config is required"),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.scenarios {
        cfg.evaluation.scenarios = n;
        cfg.online.eval_scenarios = n;
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    match cli.command {
        Command::Calibrate { write } => {
            let me = commands::calibrate(&cfg, if write { config_path.as_deref() } else { None })?;
            println!("rider_rate {me:.10}");
        }
        Command::Train { weights } => {
            let (_, log) = commands::train(&cfg, weights.as_deref(), &out)?;
            let last = log.last().map(|r| r.timestep).unwrap_or(0);
            println!("trained {} updates, {last} timesteps -> {}", log.len(), out.join(commands::WEIGHTS_FILE).display());
        }
        Command::Evaluate { hedger, weights } => {
            let runner = Parallel::new(cli.threads)?;
            let r = commands::evaluate(&cfg, hedger, weights.as_deref(), &runner, &out)?;
            let s = r.stats;
            println!(
                "{} mean {:.4} median {:.4} std {:.4} var90 {:.4} var95 {:.4} tvar90 {:.4} tvar95 {:.4} rmse {:.4}",
                hedger.label(),
                s.mean,
                s.median,
                s.std_dev,
                s.var90,
                s.var95,
                s.tvar90,
                s.tvar95,
                s.rmse
            );
        }
        Command::Compare { weights, hedger } => {
            let runner = Parallel::new(cli.threads)?;
            let against = match hedger {
                Some(h) => vec![h],
                None => vec![HedgerKind::CfmBs, HedgerKind::IfmBs, HedgerKind::CfmHeston, HedgerKind::IfmHeston],
            };
            let cmp = commands::compare(&cfg, &weights, &against, &runner, &out)?;
            println!("rl rmse {:.4} mean {:.4}", cmp.rl.stats.rmse, cmp.rl.stats.mean);
            for (kind, report, pair) in cmp.rows {
                println!(
                    "rl - {}: mean {:.4} median {:.4} std {:.4} P(>=0) {:.4} | {} rmse {:.4}",
                    kind.label(),
                    pair.mean,
                    pair.median,
                    pair.std_dev,
                    pair.prob_non_negative,
                    kind.label(),
                    report.stats.rmse
                );
            }
        }
        Command::Online { weights, no_learning } => {
            let runner = Parallel::new(cli.threads)?;
            for r in commands::online(&cfg, &weights, !no_learning, &runner, &out)? {
                println!(
                    "update {:>2} spot {:>8.3} agent {:>9.4} {} {:>9.4} {} {:>9.4}",
                    r.update,
                    r.spot,
                    r.agent.mean,
                    ONLINE_BENCHMARKS[0],
                    r.benchmarks[0].mean,
                    ONLINE_BENCHMARKS[1],
                    r.benchmarks[1].mean
                );
            }
        }
        Command::Sensitivity => {
            let runner = Parallel::new(cli.threads)?;
            for row in commands::sensitivity(&cfg, &runner, &out)? {
                let (k, v) = row.change.map(|o| o.label()).unwrap_or(("base", f64::NAN));
                println!("{k}={v}: rl rmse {:.4} cfm-bs rmse {:.4}", row.rl.stats.rmse, row.delta.stats.rmse);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
