//! Acceptance criteria of the hedging lab.
//!
//! Runs every criterion with fixed seeds and pinned tolerances and prints one
//! `PASS`/`FAIL` line per criterion. The process exits non-zero when any
//! criterion fails. Set `ACCEPTANCE_ONLY=6,7` to run a subset.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use vahedge::commands;
use vahedge::{HedgerKind, Parallel, RunConfig};
use vahedge_core::delta::{cfm_bs_delta, ifm_bs_delta, DeltaHedger};
use vahedge_core::env::{run_episode, DeltaPolicy, EnvConfig, FnPolicy, HedgingEnv, Policy, ZeroPolicy};
use vahedge_core::evalharness::{correct_delta, evaluate_policy, Override, PolicySpec};
use vahedge_core::liability::{bs_cfm_net_liability, ifm_bs_net_liability, mc_net_liability_oracle, ContractTerms, PricingModel};
use vahedge_core::market::MortalityModel;
use vahedge_core::neuralnet::{Adam, NetPolicy};
use vahedge_core::policygrad::{compute_advantages, ppo_gradient, ppo_objective, ppo_update, Collector, ContractChain, LogRow};
use vahedge_core::rng::StreamKey;

// Pinned tolerances.
const MC_PATHS: u64 = 100_000;
const MC_SIGMAS: f64 = 3.0;
const MC_CONFIRM_FACTOR: u64 = 4;
const FEE_RANGE: (f64, f64) = (0.018, 0.020);
const DELTA_REL: f64 = 1e-5;
const GRAD_REL: f64 = 1e-4;
const GRAD_ABS: f64 = 1e-7;
const TELESCOPE_REL: f64 = 1e-9;
const DELTA_RMSE: (f64, f64) = (0.58, 0.05);
const DELTA_MEAN: (f64, f64) = (-0.01, 0.03);
const RL_RMSE_CAP: f64 = 1.0;
const LOG_TAIL_FRACTION: f64 = 0.1;
const ONLINE_BAND: f64 = 0.5;
const ONLINE_CATCH_UP_BY: usize = 10;
const SENSITIVITY_DELTA_TOL: f64 = 0.05;
const SENSITIVITY_RATIO_CAP: f64 = 2.0;
/// Delta RMSE for mu = 0.12, 0.04, sigma = 0.3, 0.1, nu = 0.03, 0.01.
const SENSITIVITY_DELTA_RMSE: [f64; 6] = [0.50, 0.67, 0.79, 0.34, 0.63, 0.56];
const SPREAD_KEYS: u64 = 8;
const TRAINING_SEEDS: [u64; 3] = [1, 2, 3];

type Criterion = (u32, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn runner() -> &'static Parallel {
    static R: OnceLock<Parallel> = OnceLock::new();
    R.get_or_init(|| Parallel::new(0).unwrap())
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Agents trained with the default trainer on the baseline setting, one per seed.
struct Agent {
    seed: u64,
    cfg: RunConfig,
    dir: tempfile::TempDir,
    log: Vec<LogRow>,
}

impl Agent {
    fn weights(&self) -> PathBuf {
        self.dir.path().join(commands::WEIGHTS_FILE)
    }
}

fn agents() -> &'static [Agent] {
    static A: OnceLock<Vec<Agent>> = OnceLock::new();
    A.get_or_init(|| {
        TRAINING_SEEDS
            .iter()
            .map(|&seed| {
                let cfg = RunConfig { seed, ..RunConfig::baseline() };
                let dir = tempfile::tempdir().unwrap();
                let (_, log) = commands::train(&cfg, None, dir.path()).expect("training");
                Agent { seed, cfg, dir, log }
            })
            .collect()
    })
}

fn random_terms<R: Rng>(rng: &mut R) -> ContractTerms {
    let fee_rate = rng.random_range(0.01..0.03);
    ContractTerms {
        guarantee: rng.random_range(80.0..120.0),
        shares: rng.random_range(0.8..1.6),
        fee_rate,
        rider_rate: rng.random_range(0.1..1.0) * fee_rate,
        maturity: rng.random_range(0.5..1.5),
        policyholders: rng.random_range(1..=5),
        age: 20.0,
    }
}

fn criterion_1() -> Outcome {
    let mut rng = StreamKey::new(101).rng();
    let mut worst: f64 = 0.0;
    let mut flagged = Vec::new();
    let mut misses = 0;
    for point in 0..50u64 {
        let terms = random_terms(&mut rng);
        let t = rng.random_range(0.0..0.9) * terms.maturity;
        let f = rng.random_range(60.0..160.0);
        let n = rng.random_range(1..=terms.policyholders);
        let (r, sigma) = (rng.random_range(0.0..0.05), rng.random_range(0.1..0.4));
        let nu = rng.random_range(0.005..0.05);
        let upper = rng.random_range(terms.maturity + 5.0..80.0);
        let model = PricingModel::BlackScholes { r, sigma };
        let key = StreamKey::new(202).child(point);
        let cases = [
            ("cfm", bs_cfm_net_liability(t, f, n, &terms, r, sigma, nu).unwrap().net, MortalityModel::Constant { force: nu }),
            (
                "ifm",
                ifm_bs_net_liability(t, f, n, &terms, r, sigma, upper).unwrap().net,
                MortalityModel::Uniform { lower: 0.0, upper },
            ),
        ];
        for (label, closed, mortality) in cases {
            let z_of = |paths: u64, key: StreamKey| {
                let mc = mc_net_liability_oracle(t, f, n, &terms, model, mortality, paths, key).unwrap();
                (closed - mc.value.net).abs() / mc.se_net
            };
            let z = z_of(MC_PATHS, key);
            if z > MC_SIGMAS {
                // Confirmation on an independent stream with more paths: a real
                // bias persists, a tail draw does not.
                let z2 = z_of(MC_CONFIRM_FACTOR * MC_PATHS, key.child(1));
                flagged.push(format!("{label}#{point} z={z:.2} then {z2:.2}"));
                worst = worst.max(z2);
                if z2 > MC_SIGMAS {
                    misses += 1;
                }
            } else {
                worst = worst.max(z);
            }
        }
    }
    outcome(
        misses == 0,
        format!(
            "100 comparisons at {MC_PATHS} paths, {} beyond {MC_SIGMAS} SE re-priced at {}x paths [{}], worst final |z| = {worst:.2}, {misses} confirmed misses",
            flagged.len(),
            MC_CONFIRM_FACTOR,
            flagged.join(", ")
        ),
    )
}

fn criterion_2() -> Outcome {
    let me = RunConfig::baseline().calibrated_rider_rate().unwrap();
    outcome((FEE_RANGE.0..=FEE_RANGE.1).contains(&me), format!("m_e = {me:.7}, required in [{}, {}]", FEE_RANGE.0, FEE_RANGE.1))
}

fn criterion_3() -> Outcome {
    let mut rng = StreamKey::new(303).rng();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let terms = random_terms(&mut rng);
        let t = rng.random_range(0.0..0.95) * terms.maturity;
        let s = rng.random_range(50.0..180.0);
        let n = rng.random_range(1..=500);
        let (r, sigma) = (rng.random_range(0.0..0.05), rng.random_range(0.1..0.4));
        let nu = rng.random_range(0.005..0.05);
        let upper = rng.random_range(terms.maturity + 5.0..80.0);
        let h = 1e-4 * s;
        let cfm = |x: f64| bs_cfm_net_liability(t, terms.account_value(x, t), n, &terms, r, sigma, nu).unwrap().net;
        let ifm = |x: f64| ifm_bs_net_liability(t, terms.account_value(x, t), n, &terms, r, sigma, upper).unwrap().net;
        let fd_cfm = (cfm(s + h) - cfm(s - h)) / (2.0 * h);
        let fd_ifm = (ifm(s + h) - ifm(s - h)) / (2.0 * h);
        worst = worst.max(rel_err(cfm_bs_delta(t, s, n, &terms, r, sigma, nu).unwrap(), fd_cfm));
        worst = worst.max(rel_err(ifm_bs_delta(t, s, n, &terms, r, sigma, upper).unwrap(), fd_ifm));
    }
    outcome(worst <= DELTA_REL, format!("50 points x 2 laws, worst relative error {worst:.2e} (limit {DELTA_REL:.0e})"))
}

/// Surrogate gradients at post-update parameters, where ratios differ from 1
/// and some samples sit in the clipped region.
fn criterion_4() -> Outcome {
    let env = RunConfig::baseline().train_env().unwrap();
    let ppo = RunConfig::baseline().ppo().unwrap();
    let mut rng = StreamKey::new(404).rng();
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    let mut failures = 0usize;
    let mut clipped = 0usize;
    let mut worst_abs: f64 = 0.0;
    let mut largest: f64 = 0.0;
    for b in 0..20u64 {
        let mut params = ppo.init_params(StreamKey::new(500 + b)).unwrap();
        let mut ws = params.workspace();
        let mut collector = Collector::new(&env, ContractChain::Repeat, ppo.reward_scaling, StreamKey::new(600 + b)).unwrap();
        let len = rng.random_range(4..12);
        let batch = collector.collect(&params, len, &mut ws).unwrap();
        let mut adam = Adam::new(0.01, params.len());
        let mut scratch = Vec::new();
        ppo_update(&mut params, &mut adam, &batch, &ppo, &mut ws, &mut scratch).unwrap();
        let adv = compute_advantages(&batch);
        let mut grad = vec![0.0; params.len()];
        let stats = ppo_gradient(&params, &batch, &adv, &ppo, &mut ws, &mut grad).unwrap();
        clipped += (stats.clip_fraction * len as f64).round() as usize;
        // Every layer is sampled: 300 random coordinates per batch.
        for _ in 0..300 {
            let i = rng.random_range(0..params.len());
            let w = params.as_slice()[i];
            let h = 1e-5 * w.abs().max(1.0);
            let mut p = params.clone();
            p.as_mut_slice()[i] = w + h;
            let up = ppo_objective(&p, &batch, &adv, &ppo).unwrap();
            p.as_mut_slice()[i] = w - h;
            let dn = ppo_objective(&p, &batch, &adv, &ppo).unwrap();
            let fd = (up - dn) / (2.0 * h);
            let err = (fd - grad[i]).abs();
            worst_abs = worst_abs.max(err);
            largest = largest.max(grad[i].abs());
            checked += 1;
            if err > GRAD_ABS {
                worst = worst.max(rel_err(fd, grad[i]));
                if rel_err(fd, grad[i]) > GRAD_REL {
                    failures += 1;
                }
            }
        }
    }
    outcome(
        failures == 0,
        format!(
            "20 batches, {checked} weights, {clipped} clipped samples, max |grad| {largest:.2e}, worst absolute error {worst_abs:.2e}, worst relative error above the absolute floor {worst:.2e} (limit {GRAD_REL:.0e} or {GRAD_ABS:.0e} absolute), {failures} failures"
        ),
    )
}

fn criterion_5() -> Outcome {
    let base = RunConfig::baseline();
    let ppo = base.ppo().unwrap();
    let params = ppo.init_params(StreamKey::new(9)).unwrap();
    let mut worst: f64 = 0.0;
    let mut worst_l0: f64 = 0.0;
    // A contract priced below its calibrated charge starts with L_0 != 0.
    let mut cheap = base.eval_env().unwrap();
    cheap.terms.rider_rate = 0.015;
    let envs = [base.train_env().unwrap(), base.eval_env().unwrap(), cheap];
    let per_env = 1000 / envs.len() as u64 + 1;
    for (env_index, env) in envs.iter().enumerate() {
        let hedger = DeltaHedger::CfmBs { r: env.market.r, sigma: env.market.sigma, nu: 0.02 };
        for j in 0..per_env {
            let key = StreamKey::new(505).child(env_index as u64).with_index(j);
            let mut action_rng = key.child(1).rng();
            let mut random = FnPolicy(move |_: &_, _: &_| action_rng.random_range(-1.0..1.0));
            let mut delta = DeltaPolicy(&hedger);
            let mut net = NetPolicy::deterministic(&params);
            let policy: &mut dyn Policy = match j % 4 {
                0 => &mut ZeroPolicy,
                1 => &mut delta,
                2 => &mut random,
                _ => &mut net,
            };
            let rec = run_episode(env, policy, key).unwrap();
            let l0 = HedgingEnv::reset(env, key).unwrap().state().liability;
            worst_l0 = worst_l0.max(l0.abs());
            let sum: f64 = rec.transitions.iter().map(|t| t.reward).sum();
            let target = -rec.terminal_pnl * rec.terminal_pnl;
            worst = worst.max(rel_err(sum, target));
        }
    }
    outcome(
        worst <= TELESCOPE_REL,
        format!(
            "{} episodes (N=500, N=1, and N=1 with an uncalibrated charge; zero, Delta, random, network), worst relative error {worst:.2e} (limit {TELESCOPE_REL:.0e}), max |L_0| = {worst_l0:.2}",
            per_env * envs.len() as u64
        ),
    )
}

/// Mean and standard deviation of the Delta RMSE over independent scenario
/// sets. Reported next to a verdict, never part of it.
fn delta_rmse_spread(env: &EnvConfig, hedger: &DeltaHedger, scenarios: u64) -> (f64, f64) {
    let xs: Vec<f64> = (0..SPREAD_KEYS)
        .map(|i| {
            let key = StreamKey::new(1010).child(i);
            evaluate_policy(runner(), PolicySpec::Delta(hedger), env, scenarios, key).unwrap().stats.rmse
        })
        .collect();
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let sd = (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
    (m, sd)
}

fn criterion_6() -> Outcome {
    let cfg = RunConfig::baseline();
    let dir = tempfile::tempdir().unwrap();
    let r = commands::evaluate(&cfg, HedgerKind::CfmBs, None, runner(), dir.path()).unwrap();
    let s = r.stats;
    let pass = (s.rmse - DELTA_RMSE.0).abs() <= DELTA_RMSE.1 && (s.mean - DELTA_MEAN.0).abs() <= DELTA_MEAN.1;
    let env = cfg.eval_env().unwrap();
    let (m, sd) = delta_rmse_spread(&env, &correct_delta(&env).unwrap(), cfg.evaluation.scenarios);
    outcome(
        pass,
        format!(
            "{} scenarios: rmse {:.3} (target {}±{}), mean {:.4} (target {}±{}); {SPREAD_KEYS} other scenario sets give rmse {m:.3}±{sd:.3}",
            s.count, s.rmse, DELTA_RMSE.0, DELTA_RMSE.1, s.mean, DELTA_MEAN.0, DELTA_MEAN.1
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut good = 0;
    let mut parts = Vec::new();
    for a in agents() {
        let dir = tempfile::tempdir().unwrap();
        let cmp = commands::compare(&a.cfg, &a.weights(), &[HedgerKind::CfmHeston, HedgerKind::IfmHeston], runner(), dir.path())
            .unwrap();
        let rl = cmp.rl.stats.rmse;
        let (ch, ih) = (cmp.rows[0].1.stats.rmse, cmp.rows[1].1.stats.rmse);
        let ok = rl <= RL_RMSE_CAP && rl < ch && rl < ih;
        good += ok as usize;
        parts.push(format!("seed {}: rl {rl:.3} cfm-heston {ch:.3} ifm-heston {ih:.3}", a.seed));
    }
    outcome(good >= 2, format!("{good}/3 seeds with rl rmse <= {RL_RMSE_CAP} and below both Heston Deltas; {}", parts.join("; ")))
}

fn decile_mean(xs: &[f64], first: bool) -> f64 {
    let k = (xs.len() / 10).max(1);
    let part = if first { &xs[..k] } else { &xs[xs.len() - k..] };
    part.iter().sum::<f64>() / k as f64
}

fn slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

fn criterion_8() -> Outcome {
    let mut good = 0;
    let mut parts = Vec::new();
    for a in agents() {
        let ret: Vec<f64> = a.log.iter().map(|r| r.mean_bootstrapped_return).collect();
        let ent: Vec<f64> = a.log.iter().map(|r| r.batch_entropy).collect();
        let hi = ret.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = ret.iter().cloned().fold(f64::INFINITY, f64::min);
        let tail = decile_mean(&ret, false);
        let converged = tail.is_finite() && tail.abs() <= LOG_TAIL_FRACTION * (hi - lo);
        let (e0, e1, de) = (decile_mean(&ent, true), decile_mean(&ent, false), slope(&ent));
        let decreasing = e1 < e0 && de < 0.0;
        good += (converged && decreasing) as usize;
        parts.push(format!(
            "seed {}: last-decile return {tail:.3e} vs range {:.3e}, entropy {e0:.2} -> {e1:.2} (slope {de:.1e})",
            a.seed,
            hi - lo
        ));
    }
    outcome(good == 3, format!("{good}/3 training logs converge with decreasing entropy; {}", parts.join("; ")))
}

fn criterion_9() -> Outcome {
    let mut good = 0;
    let mut parts = Vec::new();
    for a in agents() {
        let dir = tempfile::tempdir().unwrap();
        let learn = commands::online(&a.cfg, &a.weights(), true, runner(), dir.path()).unwrap();
        let frozen = commands::online(&a.cfg, &a.weights(), false, runner(), dir.path()).unwrap();
        let avg = |f: &dyn Fn(&vahedge_core::policygrad::OnlineRow) -> f64, rows: &[vahedge_core::policygrad::OnlineRow]| {
            rows.iter().map(f).sum::<f64>() / rows.len() as f64
        };
        let frozen_avg = avg(&|r| r.agent.mean, &frozen);
        let incorrect_avg = avg(&|r| r.benchmarks[0].mean, &frozen);
        let worse = frozen_avg < incorrect_avg;
        let caught = learn[..=ONLINE_CATCH_UP_BY].iter().position(|r| r.agent.mean >= r.benchmarks[0].mean - ONLINE_BAND);
        let last = learn.last().unwrap();
        let gap = last.agent.mean - last.benchmarks[1].mean;
        let ok = worse && caught.is_some() && gap.abs() <= ONLINE_BAND;
        good += ok as usize;
        parts.push(format!(
            "seed {}: frozen {frozen_avg:.2} vs incorrect {incorrect_avg:.2}, incorrect band reached at {}, final gap to correct {gap:.2}",
            a.seed,
            caught.map_or("never".to_string(), |u| format!("update {u}"))
        ));
    }
    outcome(good >= 2, format!("{good}/3 seeds; {}", parts.join("; ")))
}

fn criterion_10() -> Outcome {
    let cfg = RunConfig::baseline();
    assert_eq!(cfg.overrides().unwrap(), Override::baseline_set());
    let dir = tempfile::tempdir().unwrap();
    let rows = commands::sensitivity(&cfg, runner(), dir.path()).unwrap();
    let eval = cfg.eval_env().unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (row, target) in rows.iter().zip(SENSITIVITY_DELTA_RMSE) {
        let change = row.change.unwrap();
        let (k, v) = change.label();
        let (d, rl) = (row.delta.stats.rmse, row.rl.stats.rmse);
        let env = change.apply(&eval).unwrap();
        let (m, sd) = delta_rmse_spread(&env, &correct_delta(&env).unwrap(), cfg.evaluation.scenarios);
        let delta_ok = (d - target).abs() <= SENSITIVITY_DELTA_TOL;
        let rl_ok = rl <= SENSITIVITY_RATIO_CAP * d;
        pass &= delta_ok && rl_ok;
        parts.push(format!(
            "{k}={v}: delta {d:.3}{} (target {target}; {SPREAD_KEYS} other scenario sets {m:.3}±{sd:.3}) rl {rl:.3}{}",
            if delta_ok { "" } else { "!" },
            if rl_ok { "" } else { "!" }
        ));
    }
    outcome(pass, parts.join("; "))
}

fn main() {
    let only: Option<Vec<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [Criterion; 10] = [
        (1, "closed-form liabilities agree with the Monte-Carlo oracle", criterion_1),
        (2, "rider-charge calibration", criterion_2),
        (3, "analytic Deltas match finite differences", criterion_3),
        (4, "PPO surrogate gradients match finite differences", criterion_4),
        (5, "anchor rewards telescope to minus the squared terminal P&L", criterion_5),
        (6, "CFM&BS Delta benchmark", criterion_6),
        (7, "trained agent beats the Heston Deltas", criterion_7),
        (8, "training log shape", criterion_8),
        (9, "online learning adaptation", criterion_9),
        (10, "sensitivity rows", criterion_10),
    ];
    let mut failed = Vec::new();
    for (n, title, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let secs = start.elapsed().as_secs_f64();
        println!("{} criterion {n:>2}: {title} | {} [{secs:.1}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
