//! The pipeline behind each CLI verb. Every function writes its artifacts into
//! an existing output directory and returns what it printed a summary of.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use vahedge_core::evalharness::{
    correct_delta, evaluate_policy, sensitivity_sweep, EvalReport, PairwiseReport, PolicySpec, SensitivityRow,
};
use vahedge_core::neuralnet::NetworkParams;
use vahedge_core::policygrad::{online_learning_run, ContractChain, LogRow, OnlineRow, PpoTrainer};

use crate::config::{HedgerKind, RunConfig};
use crate::io;
use crate::parallel::Parallel;

pub const WEIGHTS_FILE: &str = "weights.bin";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";

/// Sub-stream numbers under the run seed.
mod streams {
    pub const TRAIN: u64 = 1;
    pub const RESUME: u64 = 2;
    pub const EVAL: u64 = 3;
    pub const SENSITIVITY: u64 = 4;
    pub const ONLINE: u64 = 5;
}

fn require_dir(out: &Path) -> Result<()> {
    if !out.is_dir() {
        bail!("output directory {} does not exist", out.display());
    }
    Ok(())
}

/// Calibrated rider-charge rate; with `write_back` the config file is updated.
pub fn calibrate(cfg: &RunConfig, write_back: Option<&Path>) -> Result<f64> {
    let me = cfg.calibrated_rider_rate().context("rider-charge calibration")?;
    if let Some(path) = write_back {
        let mut updated = cfg.clone();
        updated.actuarial.rider_rate = Some(me);
        fs::write(path, updated.to_toml()?).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(me)
}

/// Trains from scratch, or continues from `resume` on fresh streams, and
/// writes the weights and the training log.
pub fn train(cfg: &RunConfig, resume: Option<&Path>, out: &Path) -> Result<(NetworkParams, Vec<LogRow>)> {
    require_dir(out)?;
    let env = cfg.train_env()?;
    let ppo = cfg.ppo()?;
    let mut trainer = match resume {
        Some(path) => {
            let params = io::load_weights(path, &ppo.architecture)?;
            PpoTrainer::with_params(&env, &ppo, params, ContractChain::Repeat, cfg.key().child(streams::RESUME))?
        }
        None => PpoTrainer::new(&env, &ppo, cfg.key().child(streams::TRAIN))?,
    };
    let log = trainer.train(ppo.total_timesteps)?;
    let params = trainer.into_params();
    io::save_weights(&params, &out.join(WEIGHTS_FILE))?;
    io::write_training_log(&log, &out.join(TRAINING_LOG_FILE))?;
    Ok((params, log))
}

fn load_agent(cfg: &RunConfig, weights: Option<&Path>) -> Result<NetworkParams> {
    let path = weights.context("the rl hedger needs --weights")?;
    io::load_weights(path, &cfg.ppo()?.architecture)
}

/// Frozen evaluation of one hedger on the evaluation environment.
pub fn evaluate(
    cfg: &RunConfig,
    hedger: HedgerKind,
    weights: Option<&Path>,
    runner: &Parallel,
    out: &Path,
) -> Result<EvalReport> {
    require_dir(out)?;
    let env = cfg.eval_env()?;
    let key = cfg.key().child(streams::EVAL);
    let scenarios = cfg.evaluation.scenarios;
    let report = match hedger {
        HedgerKind::Rl => {
            let params = load_agent(cfg, weights)?;
            evaluate_policy(runner, PolicySpec::network(&params, cfg.trainer.action_limit), &env, scenarios, key)?
        }
        HedgerKind::Zero => evaluate_policy(runner, PolicySpec::Zero, &env, scenarios, key)?,
        kind => {
            let h = cfg.hedger(kind)?.expect("Delta hedger");
            evaluate_policy(runner, PolicySpec::Delta(&h), &env, scenarios, key)?
        }
    };
    let tag = hedger.label();
    io::write_pnls(&report, &out.join(format!("pnl_{tag}.csv")))?;
    io::write_ecdf(&report, &out.join(format!("ecdf_{tag}.csv")))?;
    io::write_stats(&[(tag, &report.stats)], &out.join(format!("stats_{tag}.csv")))?;
    Ok(report)
}

pub struct Comparison {
    pub rl: EvalReport,
    /// Opponent, its report, and the pathwise differences agent minus opponent.
    pub rows: Vec<(HedgerKind, EvalReport, PairwiseReport)>,
}

/// The agent against Delta hedgers on common scenarios: summary statistics of
/// every hedger plus pathwise differences agent minus hedger.
pub fn compare(cfg: &RunConfig, weights: &Path, against: &[HedgerKind], runner: &Parallel, out: &Path) -> Result<Comparison> {
    require_dir(out)?;
    let env = cfg.eval_env()?;
    let key = cfg.key().child(streams::EVAL);
    let scenarios = cfg.evaluation.scenarios;
    let params = load_agent(cfg, Some(weights))?;
    let agent = PolicySpec::network(&params, cfg.trainer.action_limit);
    let rl = evaluate_policy(runner, agent, &env, scenarios, key)?;
    if against.contains(&HedgerKind::Rl) {
        bail!("compare takes Delta hedgers or zero as opponents");
    }
    let hedgers = cfg.hedgers(against)?;
    let mut rows: Vec<(HedgerKind, EvalReport, PairwiseReport)> = Vec::with_capacity(against.len());
    for (&kind, hedger) in against.iter().zip(&hedgers) {
        let spec = match hedger {
            Some(h) => PolicySpec::Delta(h),
            None => PolicySpec::Zero,
        };
        let report = evaluate_policy(runner, spec, &env, scenarios, key)?;
        let pair = PairwiseReport::from_pair(&rl.pnls, &report.pnls)?;
        rows.push((kind, report, pair));
    }
    let mut stats = vec![("rl", &rl.stats)];
    stats.extend(rows.iter().map(|(k, r, _)| (k.label(), &r.stats)));
    io::write_stats(&stats, &out.join("stats.csv"))?;
    let pairs: Vec<_> = rows.iter().map(|(k, _, p)| (k.label(), p)).collect();
    io::write_pairwise(&pairs, &out.join("pairwise.csv"))?;
    io::write_pnls(&rl, &out.join("pnl_rl.csv"))?;
    for (k, r, _) in &rows {
        io::write_pnls(r, &out.join(format!("pnl_{}.csv", k.label())))?;
    }
    Ok(Comparison { rl, rows })
}

/// Benchmarks of the online study: the Delta of the training setting
/// (incorrect live) and the Delta that is correct in the live market.
pub const ONLINE_BENCHMARKS: [&str; 2] = ["incorrect_delta", "correct_delta"];

/// Online learning in the live market, evaluated on a rolling basis.
pub fn online(cfg: &RunConfig, weights: &Path, learning: bool, runner: &Parallel, out: &Path) -> Result<Vec<OnlineRow>> {
    require_dir(out)?;
    let params = load_agent(cfg, Some(weights))?;
    let live = cfg.online_env()?;
    let incorrect = cfg.hedger(HedgerKind::CfmBs)?.expect("Delta hedger");
    let correct = correct_delta(&live)?;
    let rows = online_learning_run(
        &params,
        &live,
        &cfg.online_config(learning)?,
        &[incorrect, correct],
        runner,
        cfg.key().child(streams::ONLINE),
    )?;
    let name = if learning { "online.csv" } else { "online_frozen.csv" };
    io::write_online(&rows, &ONLINE_BENCHMARKS, &out.join(name))?;
    Ok(rows)
}

/// Retrains and re-evaluates under each configured override.
pub fn sensitivity(cfg: &RunConfig, runner: &Parallel, out: &Path) -> Result<Vec<SensitivityRow>> {
    require_dir(out)?;
    let overrides = cfg.overrides()?;
    let rows = sensitivity_sweep(
        runner,
        &cfg.train_env()?,
        &cfg.eval_env()?,
        &overrides,
        &cfg.ppo()?,
        cfg.evaluation.scenarios,
        cfg.key().child(streams::SENSITIVITY),
    )?;
    io::write_sensitivity(&rows, &out.join("sensitivity.csv"))?;
    Ok(rows)
}
