//! Frozen-policy evaluation, P&L statistics and sensitivity sweeps.
//!
//! Scenario `j` always runs on the streams of `key.with_index(j)`, so two
//! policies evaluated with the same key face identical markets and deaths.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::delta::DeltaHedger;
use crate::env::{episode_pnl, EnvConfig, Policy, ZeroPolicy};
use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::neuralnet::{NetPolicy, NetworkParams};
use crate::policygrad::{train_ppo, PpoConfig, TrainOutcome};
use crate::rng::StreamKey;

/// Summary of terminal P&Ls (left-tail risk convention).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnlStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Unbiased (`n - 1`) standard deviation.
    pub std_dev: f64,
    pub var90: f64,
    pub var95: f64,
    pub tvar90: f64,
    pub tvar95: f64,
    /// `sqrt(mean(pnl^2))`.
    pub rmse: f64,
}

/// Lower empirical quantile: the order statistic at `ceil(q n)` (1-based).
pub fn lower_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = libm::ceil(q * n as f64 - 1e-9).max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// `VaR_alpha`: the lower `(1 - alpha)` quantile of the P&L.
pub fn value_at_risk(sorted: &[f64], alpha: f64) -> f64 {
    lower_quantile(sorted, 1.0 - alpha)
}

/// `TVaR_alpha`: mean of the P&Ls at or below `VaR_alpha`.
pub fn tail_value_at_risk(sorted: &[f64], alpha: f64) -> f64 {
    let var = value_at_risk(sorted, alpha);
    let tail = sorted.partition_point(|&x| x <= var);
    sorted[..tail].iter().sum::<f64>() / tail as f64
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn sorted_copy(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::InvalidParameter("no samples"));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("non-finite P&L"));
    }
    let mut v = xs.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    Ok(v)
}

fn mean_and_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    let std = if xs.len() > 1 { sqrt(ss / (n - 1.0)) } else { 0.0 };
    (mean, std)
}

impl PnlStats {
    pub fn from_samples(pnls: &[f64]) -> Result<Self> {
        let sorted = sorted_copy(pnls)?;
        let (mean, std_dev) = mean_and_std(&sorted);
        Ok(Self {
            count: sorted.len(),
            mean,
            median: median(&sorted),
            std_dev,
            var90: value_at_risk(&sorted, 0.90),
            var95: value_at_risk(&sorted, 0.95),
            tvar90: tail_value_at_risk(&sorted, 0.90),
            tvar95: tail_value_at_risk(&sorted, 0.95),
            rmse: sqrt(sorted.iter().map(|x| x * x).sum::<f64>() / sorted.len() as f64),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Terminal P&L of scenario `j` at index `j`.
    pub pnls: Vec<f64>,
    pub stats: PnlStats,
}

impl EvalReport {
    pub fn from_pnls(pnls: Vec<f64>) -> Result<Self> {
        let stats = PnlStats::from_samples(&pnls)?;
        Ok(Self { pnls, stats })
    }

    /// Empirical CDF points `(pnl, F(pnl))`.
    pub fn ecdf(&self) -> Vec<(f64, f64)> {
        let mut v = self.pnls.clone();
        v.sort_unstable_by(f64::total_cmp);
        let n = v.len() as f64;
        v.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseReport {
    /// `pnl_A(j) - pnl_B(j)`.
    pub diffs: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub std_dev: f64,
    pub prob_non_negative: f64,
}

impl PairwiseReport {
    pub fn from_pair(a: &[f64], b: &[f64]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Dimension("paired reports must have equal scenario counts"));
        }
        let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let sorted = sorted_copy(&diffs)?;
        let (mean, std_dev) = mean_and_std(&sorted);
        let non_negative = sorted.iter().filter(|&&d| d >= 0.0).count();
        Ok(Self { median: median(&sorted), mean, std_dev, prob_non_negative: non_negative as f64 / sorted.len() as f64, diffs })
    }
}

/// A policy description that can be instantiated once per scenario (and per thread).
#[derive(Debug, Clone, Copy)]
pub enum PolicySpec<'a> {
    /// Network acting with its mean action, clamped to `[-limit, limit]`.
    Network {
        params: &'a NetworkParams,
        limit: f64,
    },
    Delta(&'a DeltaHedger),
    Zero,
}

impl<'a> PolicySpec<'a> {
    pub fn network(params: &'a NetworkParams, limit: f64) -> Self {
        PolicySpec::Network { params, limit }
    }

    pub fn instantiate(&self) -> Box<dyn Policy + 'a> {
        match *self {
            PolicySpec::Network { params, limit } => Box::new(NetPolicy::deterministic(params).with_limit(limit)),
            PolicySpec::Delta(h) => Box::new(crate::env::DeltaPolicy(h)),
            PolicySpec::Zero => Box::new(ZeroPolicy),
        }
    }
}

/// Runs scenarios `0..scenarios` and returns their terminal P&Ls in scenario order.
pub trait ScenarioRunner {
    fn run(&self, policy: PolicySpec<'_>, config: &EnvConfig, scenarios: u64, key: StreamKey) -> Result<Vec<f64>>;
}

/// Single-threaded runner.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

/// Terminal P&Ls of scenarios in `range` with one policy instance.
pub fn run_scenarios(
    policy: PolicySpec<'_>,
    config: &EnvConfig,
    range: core::ops::Range<u64>,
    key: StreamKey,
) -> Result<Vec<f64>> {
    let mut p = policy.instantiate();
    range.map(|j| episode_pnl(config, p.as_mut(), key.with_index(j))).collect()
}

impl ScenarioRunner for Sequential {
    fn run(&self, policy: PolicySpec<'_>, config: &EnvConfig, scenarios: u64, key: StreamKey) -> Result<Vec<f64>> {
        run_scenarios(policy, config, 0..scenarios, key)
    }
}

pub fn evaluate_policy(
    runner: &dyn ScenarioRunner,
    policy: PolicySpec<'_>,
    config: &EnvConfig,
    scenarios: u64,
    key: StreamKey,
) -> Result<EvalReport> {
    if scenarios == 0 {
        return Err(Error::InvalidParameter("need at least one scenario"));
    }
    EvalReport::from_pnls(runner.run(policy, config, scenarios, key)?)
}

/// Pathwise differences `A - B` on common scenarios.
pub fn compare_policies(
    runner: &dyn ScenarioRunner,
    a: PolicySpec<'_>,
    b: PolicySpec<'_>,
    config: &EnvConfig,
    scenarios: u64,
    key: StreamKey,
) -> Result<PairwiseReport> {
    let ra = evaluate_policy(runner, a, config, scenarios, key)?;
    let rb = evaluate_policy(runner, b, config, scenarios, key)?;
    PairwiseReport::from_pair(&ra.pnls, &rb.pnls)
}

/// A one-parameter change applied to both the training and evaluation markets.
/// The contract, rider charge included, is left as is.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Override {
    Drift(f64),
    Volatility(f64),
    MortalityForce(f64),
}

impl Override {
    pub fn label(&self) -> (&'static str, f64) {
        match *self {
            Override::Drift(x) => ("mu", x),
            Override::Volatility(x) => ("sigma", x),
            Override::MortalityForce(x) => ("nu", x),
        }
    }

    pub fn apply(&self, config: &EnvConfig) -> Result<EnvConfig> {
        let mut c = *config;
        match *self {
            Override::Drift(mu) => c.market.mu = mu,
            Override::Volatility(sigma) => c.market.sigma = sigma,
            Override::MortalityForce(nu) => match c.mortality {
                crate::market::MortalityModel::Constant { .. } => {
                    c.mortality = crate::market::MortalityModel::Constant { force: nu }
                }
                crate::market::MortalityModel::Uniform { .. } => {
                    return Err(Error::Unsupported("mortality override needs a constant force"))
                }
            },
        }
        c.validate()?;
        Ok(c)
    }

    /// The six one-at-a-time changes of the baseline study.
    pub fn baseline_set() -> Vec<Override> {
        alloc::vec![
            Override::Drift(0.12),
            Override::Drift(0.04),
            Override::Volatility(0.3),
            Override::Volatility(0.1),
            Override::MortalityForce(0.03),
            Override::MortalityForce(0.01),
        ]
    }
}

/// The Delta that is correct in `config`.
pub fn correct_delta(config: &EnvConfig) -> Result<DeltaHedger> {
    let (r, sigma) = (config.market.r, config.market.sigma);
    match config.mortality {
        crate::market::MortalityModel::Constant { force } => Ok(DeltaHedger::CfmBs { r, sigma, nu: force }),
        crate::market::MortalityModel::Uniform { upper, .. } => Ok(DeltaHedger::IfmBs { r, sigma, upper }),
    }
}

#[derive(Debug, Clone)]
pub struct SensitivityRow {
    /// `None` for the unmodified base row.
    pub change: Option<Override>,
    pub rl: EvalReport,
    pub delta: EvalReport,
    pub training: TrainOutcome,
}

/// Retrains the agent under each override and evaluates it next to the
/// correct Delta. An empty override list yields the base row only.
#[allow(clippy::too_many_arguments)]
pub fn sensitivity_sweep(
    runner: &dyn ScenarioRunner,
    train_config: &EnvConfig,
    eval_config: &EnvConfig,
    overrides: &[Override],
    ppo: &PpoConfig,
    scenarios: u64,
    key: StreamKey,
) -> Result<Vec<SensitivityRow>> {
    let changes: Vec<Option<Override>> =
        if overrides.is_empty() { alloc::vec![None] } else { overrides.iter().copied().map(Some).collect() };
    let mut rows = Vec::with_capacity(changes.len());
    for (i, change) in changes.into_iter().enumerate() {
        let (train, eval) = match change {
            Some(o) => (o.apply(train_config)?, o.apply(eval_config)?),
            None => (*train_config, *eval_config),
        };
        let row_key = key.child(i as u64);
        let training = train_ppo(&train, ppo, row_key.child(0))?;
        let eval_key = row_key.child(1);
        let rl = evaluate_policy(runner, PolicySpec::network(&training.params, ppo.action_limit), &eval, scenarios, eval_key)?;
        let hedger = correct_delta(&eval)?;
        let delta = evaluate_policy(runner, PolicySpec::Delta(&hedger), &eval, scenarios, eval_key)?;
        rows.push(SensitivityRow { change, rl, delta, training });
    }
    Ok(rows)
}
