//! Policy-gradient training: PPO with one Adam step per batch, REINFORCE with a
//! value baseline, and online learning inside a live environment.
//!
//! Batches are `K` consecutive transitions and may span episode boundaries.
//! The return of a fragment cut before its episode ends is bootstrapped with
//! the value estimate of the state where it was cut (no discounting).

use alloc::vec;
use alloc::vec::Vec;

use crate::delta::DeltaHedger;
use crate::env::{EnvConfig, HedgingEnv, Observation};
use crate::error::{Error, Result};
use crate::evalharness::{evaluate_policy, PnlStats, PolicySpec, ScenarioRunner};
use crate::math::{exp, expm1, ln, sqrt};
use crate::neuralnet::{Adam, Architecture, HeadAdjoint, NetworkParams, Workspace, D_FLOOR};
use crate::rng::{Purpose, SimRng, StreamKey};

/// How raw anchor rewards are rescaled before learning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RewardScaling {
    Raw,
    /// Divide by `N^2`, i.e. measure P&L per initial policyholder.
    #[default]
    PerPolicyholder,
}

impl RewardScaling {
    pub fn factor(&self, config: &EnvConfig) -> f64 {
        match self {
            RewardScaling::Raw => 1.0,
            RewardScaling::PerPolicyholder => {
                let n = config.terms.policyholders as f64;
                1.0 / (n * n)
            }
        }
    }
}

/// How advantages are rescaled within a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdvantageNorm {
    #[default]
    Off,
    /// Divide by the batch root mean square.
    Scale,
    /// Centre and divide by the batch standard deviation.
    Standardize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub learning_rate: f64,
    /// Transitions per update, `K`.
    pub batch_size: usize,
    pub clip: f64,
    /// Value-loss coefficient `c1`.
    pub vf_coef: f64,
    /// Entropy coefficient `c2`.
    pub entropy_coef: f64,
    pub total_timesteps: u64,
    /// Global gradient-norm cap.
    pub max_grad_norm: f64,
    pub reward_scaling: RewardScaling,
    pub architecture: Architecture,
    /// Initial scale of both head layers relative to He initialisation.
    pub head_gain: f64,
    /// Initial policy standard deviation (shares per initial policyholder).
    pub initial_std: f64,
    /// Per-batch advantage rescaling before the policy term.
    pub advantage_norm: AdvantageNorm,
    /// Bound on the executed action during collection; log-densities use the unclipped sample.
    pub action_limit: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            batch_size: 60,
            clip: 0.2,
            vf_coef: 0.25,
            entropy_coef: 0.01,
            total_timesteps: 100_000,
            max_grad_norm: 10.0,
            reward_scaling: RewardScaling::PerPolicyholder,
            architecture: Architecture::default(),
            head_gain: 0.1,
            initial_std: 0.1,
            advantage_norm: AdvantageNorm::Off,
            action_limit: 3.0,
        }
    }
}

impl PpoConfig {
    /// Settings for learning inside the live environment.
    pub fn online() -> Self {
        Self { learning_rate: 0.001, batch_size: 30, total_timesteps: 600, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidParameter("learning rate must lie in (0, 1]"));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be at least 1"));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::InvalidParameter("clip factor must lie in (0, 1)"));
        }
        if !((0.0..=1.0).contains(&self.vf_coef) && (0.0..=1.0).contains(&self.entropy_coef)) {
            return Err(Error::InvalidParameter("loss coefficients must lie in [0, 1]"));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(Error::InvalidParameter("gradient norm cap must be positive"));
        }
        if !(self.initial_std > D_FLOOR && self.head_gain >= 0.0) {
            return Err(Error::InvalidParameter("initial std must exceed the floor"));
        }
        if !(self.action_limit > 0.0) {
            return Err(Error::InvalidParameter("action limit must be positive"));
        }
        self.architecture.validate()
    }

    /// Number of updates needed to consume `total_timesteps`.
    pub fn updates(&self) -> u64 {
        self.total_timesteps.div_ceil(self.batch_size as u64)
    }

    /// A freshly initialised network for this configuration.
    pub fn init_params(&self, key: StreamKey) -> Result<NetworkParams> {
        let raw = ln(expm1(self.initial_std - D_FLOOR));
        NetworkParams::init(self.architecture.clone(), key, self.head_gain, raw)
    }
}

/// One recorded transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub obs: Observation,
    pub action: f64,
    /// Scaled reward.
    pub reward: f64,
    /// `ln phi(action)` under the collecting parameters.
    pub log_prob: f64,
    /// Value estimate under the collecting parameters.
    pub value: f64,
    /// The episode ended with this transition.
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub steps: Vec<Step>,
    /// Value estimate of the state after the last step, or 0 if that step ended its episode.
    pub bootstrap_value: f64,
}

impl Batch {
    /// Contiguous episode fragments.
    pub fn fragments(&self) -> Vec<core::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for (i, s) in self.steps.iter().enumerate() {
            if s.terminal {
                out.push(start..i + 1);
                start = i + 1;
            }
        }
        if start < self.steps.len() {
            out.push(start..self.steps.len());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Advantages {
    pub advantages: Vec<f64>,
    /// Bootstrapped return targets `A + V_old`.
    pub targets: Vec<f64>,
}

/// Bootstrapped, undiscounted advantages.
pub fn compute_advantages(batch: &Batch) -> Advantages {
    let n = batch.steps.len();
    let mut targets = vec![0.0; n];
    let mut running = batch.bootstrap_value;
    for i in (0..n).rev() {
        let s = &batch.steps[i];
        if s.terminal {
            running = 0.0;
        }
        running += s.reward;
        targets[i] = running;
    }
    let advantages = targets.iter().zip(&batch.steps).map(|(g, s)| g - s.value).collect();
    Advantages { advantages, targets }
}

/// `clip(q, 1 - eps, 1 + eps)`.
#[inline]
pub fn clip_ratio(q: f64, eps: f64) -> f64 {
    q.clamp(1.0 - eps, 1.0 + eps)
}

/// How episodes follow each other in a collector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContractChain {
    /// Every episode restarts from the base configuration.
    Repeat,
    /// A new contract starts at the last observed price, the holder being older
    /// by the elapsed time; used for the live environment.
    Rolling,
}

/// Steps an environment with the stochastic policy, resuming mid-episode
/// across calls.
#[derive(Debug, Clone)]
pub struct Collector {
    base: EnvConfig,
    env: HedgingEnv,
    key: StreamKey,
    episode: u64,
    action_rng: SimRng,
    chain: ContractChain,
    reward_scale: f64,
    steps_taken: u64,
    action_limit: f64,
}

impl Collector {
    pub fn new(config: &EnvConfig, chain: ContractChain, scaling: RewardScaling, key: StreamKey) -> Result<Self> {
        Ok(Self {
            base: *config,
            env: HedgingEnv::reset(config, key.child(0))?,
            key,
            episode: 0,
            action_rng: key.with_purpose(Purpose::Action).rng(),
            chain,
            reward_scale: scaling.factor(config),
            steps_taken: 0,
            action_limit: f64::INFINITY,
        })
    }

    /// Clamps executed actions to `[-limit, limit]`.
    pub fn with_action_limit(mut self, limit: f64) -> Self {
        self.action_limit = limit;
        self
    }

    pub fn env(&self) -> &HedgingEnv {
        &self.env
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    pub fn episodes_started(&self) -> u64 {
        self.episode + 1
    }

    fn next_episode(&mut self) -> Result<()> {
        self.episode += 1;
        let config = match self.chain {
            ContractChain::Repeat => self.base,
            ContractChain::Rolling => {
                let mut c = *self.env.config();
                c.market.s0 = self.env.state().spot;
                c.terms.age += self.env.state().t;
                c
            }
        };
        self.env = HedgingEnv::reset(&config, self.key.child(self.episode))?;
        Ok(())
    }

    pub fn collect(&mut self, params: &NetworkParams, k: usize, ws: &mut Workspace) -> Result<Batch> {
        let mut steps = Vec::with_capacity(k);
        for _ in 0..k {
            let obs = self.env.observation();
            let out = params.forward_with(&obs, ws)?;
            let action = out.policy.sample(&mut self.action_rng);
            let result = self.env.step(action.clamp(-self.action_limit, self.action_limit))?;
            self.steps_taken += 1;
            steps.push(Step {
                obs,
                action,
                reward: result.reward * self.reward_scale,
                log_prob: out.policy.log_density(action),
                value: out.value,
                terminal: result.terminal,
            });
            if result.terminal {
                self.next_episode()?;
            }
        }
        let bootstrap_value = match steps.last() {
            Some(s) if !s.terminal => params.forward_with(&self.env.observation(), ws)?.value,
            _ => 0.0,
        };
        Ok(Batch { steps, bootstrap_value })
    }
}

/// `J = sum L_CLIP - c1 sum (G - V)^2 + c2 sum ln d`, evaluated directly.
pub fn ppo_objective(params: &NetworkParams, batch: &Batch, adv: &Advantages, cfg: &PpoConfig) -> Result<f64> {
    let mut j = 0.0;
    for (i, s) in batch.steps.iter().enumerate() {
        let out = params.forward(&s.obs)?;
        let q = exp(out.policy.log_density(s.action) - s.log_prob);
        let a = adv.advantages[i];
        let surrogate = (q * a).min(clip_ratio(q, cfg.clip) * a);
        let err = adv.targets[i] - out.value;
        j += surrogate - cfg.vf_coef * err * err + cfg.entropy_coef * ln(out.policy.std);
    }
    Ok(j)
}

/// Diagnostics of one pass over the batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PassStats {
    pub objective: f64,
    /// Fraction of transitions whose ratio lies outside `[1 - eps, 1 + eps]`.
    pub clip_fraction: f64,
    /// Mean Gaussian entropy of the batch's policies.
    pub entropy: f64,
}

/// Adds `grad J` to `grad` and returns the objective.
pub fn ppo_gradient(
    params: &NetworkParams,
    batch: &Batch,
    adv: &Advantages,
    cfg: &PpoConfig,
    ws: &mut Workspace,
    grad: &mut [f64],
) -> Result<PassStats> {
    let mut stats = PassStats::default();
    let mut clipped = 0usize;
    for (i, s) in batch.steps.iter().enumerate() {
        let out = params.forward_with(&s.obs, ws)?;
        let q = exp(out.policy.log_density(s.action) - s.log_prob);
        let a = adv.advantages[i];
        let unclipped = q * a;
        let clipped_term = clip_ratio(q, cfg.clip) * a;
        if (q - 1.0).abs() > cfg.clip {
            clipped += 1;
        }
        // d/d(ln phi) of min(q A, clip(q) A): q A on the unclipped branch, 0 once clipping binds.
        let d_logp = if unclipped <= clipped_term { unclipped } else { 0.0 };
        let (dc, dd) = out.policy.log_density_grad(s.action);
        let err = adv.targets[i] - out.value;
        stats.objective += unclipped.min(clipped_term) - cfg.vf_coef * err * err + cfg.entropy_coef * ln(out.policy.std);
        stats.entropy += out.policy.entropy();
        params.backward(
            ws,
            HeadAdjoint {
                mean: d_logp * dc,
                std: d_logp * dd + cfg.entropy_coef / out.policy.std,
                value: 2.0 * cfg.vf_coef * err,
            },
            grad,
        );
    }
    let n = batch.steps.len().max(1) as f64;
    stats.clip_fraction = clipped as f64 / n;
    stats.entropy /= n;
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub objective: f64,
    /// Mean bootstrapped return target over the batch.
    pub mean_bootstrapped_return: f64,
    pub batch_entropy: f64,
    /// Clip fraction of the batch under the updated parameters.
    pub clip_fraction: f64,
    pub grad_norm: f64,
    pub grad_clipped: bool,
}

/// Divides by the root mean square without centring. With an undiscounted
/// squared-error reward the consequence of an action sits in a term shared by
/// every step of its fragment, so centring removes most of the signal.
pub fn rescale(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let rms = sqrt(xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64);
    if rms > 0.0 && rms.is_finite() {
        xs.iter_mut().for_each(|x| *x /= rms);
    }
}

/// Shifts to zero mean and scales to unit standard deviation; a batch with
/// fewer than two distinct values is only centred.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = sqrt(var);
    let scale = if sd > 1e-12 * (1.0 + mean.abs()) { 1.0 / sd } else { 1.0 };
    xs.iter_mut().for_each(|x| *x = (*x - mean) * scale);
}

/// Rescales `grad` to at most `cap` in Euclidean norm; returns the original norm.
pub fn clip_global_norm(grad: &mut [f64], cap: f64) -> f64 {
    let norm = sqrt(grad.iter().map(|g| g * g).sum());
    if norm > cap {
        let s = cap / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// One Adam ascent step on the PPO surrogate. Parameters are left untouched
/// when the gradient is not finite.
pub fn ppo_update(
    params: &mut NetworkParams,
    adam: &mut Adam,
    batch: &Batch,
    cfg: &PpoConfig,
    ws: &mut Workspace,
    grad: &mut Vec<f64>,
) -> Result<UpdateStats> {
    let mut adv = compute_advantages(batch);
    let mean_bootstrapped_return = adv.targets.iter().sum::<f64>() / batch.steps.len().max(1) as f64;
    match cfg.advantage_norm {
        AdvantageNorm::Off => {}
        AdvantageNorm::Scale => rescale(&mut adv.advantages),
        AdvantageNorm::Standardize => normalize(&mut adv.advantages),
    }
    grad.clear();
    grad.resize(params.len(), 0.0);
    let pass = ppo_gradient(params, batch, &adv, cfg, ws, grad)?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    let grad_norm = clip_global_norm(grad, cfg.max_grad_norm);
    adam.ascend(params.as_mut_slice(), grad);
    let mut outside = 0usize;
    for s in &batch.steps {
        let out = params.forward_with(&s.obs, ws)?;
        let q = exp(out.policy.log_density(s.action) - s.log_prob);
        if (q - 1.0).abs() > cfg.clip {
            outside += 1;
        }
    }
    let n = batch.steps.len().max(1) as f64;
    Ok(UpdateStats {
        objective: pass.objective,
        mean_bootstrapped_return,
        batch_entropy: pass.entropy,
        clip_fraction: outside as f64 / n,
        grad_norm,
        grad_clipped: grad_norm > cfg.max_grad_norm,
    })
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub update: u64,
    /// Environment steps taken so far.
    pub timestep: u64,
    pub mean_bootstrapped_return: f64,
    pub batch_entropy: f64,
    pub clip_fraction: f64,
    pub grad_clipped: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub log: Vec<LogRow>,
}

/// Owns everything that mutates during PPO training.
#[derive(Debug, Clone)]
pub struct PpoTrainer {
    cfg: PpoConfig,
    params: NetworkParams,
    adam: Adam,
    collector: Collector,
    ws: Workspace,
    grad: Vec<f64>,
    updates: u64,
}

impl PpoTrainer {
    /// Fresh network; initial weights from `key.child(0)`, environment streams from `key.child(1)`.
    pub fn new(config: &EnvConfig, cfg: &PpoConfig, key: StreamKey) -> Result<Self> {
        cfg.validate()?;
        let params = cfg.init_params(key.child(0))?;
        Self::with_params(config, cfg, params, ContractChain::Repeat, key)
    }

    pub fn with_params(
        config: &EnvConfig,
        cfg: &PpoConfig,
        params: NetworkParams,
        chain: ContractChain,
        key: StreamKey,
    ) -> Result<Self> {
        cfg.validate()?;
        if params.architecture() != &cfg.architecture {
            return Err(Error::Dimension("network does not match the configured architecture"));
        }
        Ok(Self {
            adam: Adam::new(cfg.learning_rate, params.len()),
            collector: Collector::new(config, chain, cfg.reward_scaling, key.child(1))?.with_action_limit(cfg.action_limit),
            ws: params.workspace(),
            grad: vec![0.0; params.len()],
            cfg: cfg.clone(),
            params,
            updates: 0,
        })
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn into_params(self) -> NetworkParams {
        self.params
    }

    pub fn collector(&self) -> &Collector {
        &self.collector
    }

    /// Collects `k` transitions and, when `learn`, takes one update step.
    pub fn step(&mut self, k: usize, learn: bool) -> Result<LogRow> {
        let batch = self.collector.collect(&self.params, k, &mut self.ws)?;
        self.updates += 1;
        let stats = if learn {
            ppo_update(&mut self.params, &mut self.adam, &batch, &self.cfg, &mut self.ws, &mut self.grad)?
        } else {
            let adv = compute_advantages(&batch);
            UpdateStats {
                objective: 0.0,
                mean_bootstrapped_return: adv.targets.iter().sum::<f64>() / k as f64,
                batch_entropy: 0.0,
                clip_fraction: 0.0,
                grad_norm: 0.0,
                grad_clipped: false,
            }
        };
        Ok(LogRow {
            update: self.updates,
            timestep: self.collector.steps_taken(),
            mean_bootstrapped_return: stats.mean_bootstrapped_return,
            batch_entropy: stats.batch_entropy,
            clip_fraction: stats.clip_fraction,
            grad_clipped: stats.grad_clipped,
        })
    }

    /// Trains until `timesteps` more environment steps have been taken.
    pub fn train(&mut self, timesteps: u64) -> Result<Vec<LogRow>> {
        let target = self.collector.steps_taken() + timesteps;
        let mut log = Vec::with_capacity(timesteps.div_ceil(self.cfg.batch_size as u64) as usize);
        while self.collector.steps_taken() < target {
            let k = (target - self.collector.steps_taken()).min(self.cfg.batch_size as u64) as usize;
            log.push(self.step(k, true)?);
        }
        Ok(log)
    }
}

/// Trains a fresh agent for `cfg.total_timesteps` steps.
pub fn train_ppo(config: &EnvConfig, cfg: &PpoConfig, key: StreamKey) -> Result<TrainOutcome> {
    let mut trainer = PpoTrainer::new(config, cfg, key)?;
    let log = trainer.train(cfg.total_timesteps)?;
    Ok(TrainOutcome { params: trainer.into_params(), log })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReinforceConfig {
    pub learning_rate: f64,
    pub episodes: u64,
    pub reward_scaling: RewardScaling,
    pub architecture: Architecture,
    pub head_gain: f64,
    pub initial_std: f64,
    /// Bound on the executed action.
    pub action_limit: f64,
}

impl Default for ReinforceConfig {
    fn default() -> Self {
        let p = PpoConfig::default();
        Self {
            learning_rate: p.learning_rate,
            episodes: 400,
            reward_scaling: p.reward_scaling,
            architecture: p.architecture,
            head_gain: p.head_gain,
            initial_std: p.initial_std,
            action_limit: p.action_limit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReinforceRow {
    pub episode: u64,
    pub timestep: u64,
    /// Scaled episode return.
    pub episode_return: f64,
}

/// `sum_k A_k ln phi(a_k) - 1/2 sum_k (G_k - V(x_k))^2` with the advantages held fixed.
pub fn reinforce_surrogate(params: &NetworkParams, steps: &[Step], returns: &[f64], advantages: &[f64]) -> Result<f64> {
    let mut j = 0.0;
    for (i, s) in steps.iter().enumerate() {
        let out = params.forward(&s.obs)?;
        let err = returns[i] - out.value;
        j += advantages[i] * out.policy.log_density(s.action) - 0.5 * err * err;
    }
    Ok(j)
}

/// Adds the gradient of [`reinforce_surrogate`] to `grad`.
pub fn reinforce_gradient(
    params: &NetworkParams,
    steps: &[Step],
    returns: &[f64],
    advantages: &[f64],
    ws: &mut Workspace,
    grad: &mut [f64],
) -> Result<()> {
    for (i, s) in steps.iter().enumerate() {
        let out = params.forward_with(&s.obs, ws)?;
        let (dc, dd) = out.policy.log_density_grad(s.action);
        let a = advantages[i];
        params.backward(ws, HeadAdjoint { mean: a * dc, std: a * dd, value: returns[i] - out.value }, grad);
    }
    Ok(())
}

/// Whole-episode REINFORCE with a learned value baseline, one update per episode.
pub fn train_reinforce(config: &EnvConfig, cfg: &ReinforceConfig, key: StreamKey) -> Result<(NetworkParams, Vec<ReinforceRow>)> {
    let ppo_like = PpoConfig {
        learning_rate: cfg.learning_rate,
        architecture: cfg.architecture.clone(),
        head_gain: cfg.head_gain,
        initial_std: cfg.initial_std,
        action_limit: cfg.action_limit,
        ..PpoConfig::default()
    };
    ppo_like.validate()?;
    let mut params = ppo_like.init_params(key.child(0))?;
    let mut adam = Adam::new(cfg.learning_rate, params.len());
    let mut collector =
        Collector::new(config, ContractChain::Repeat, cfg.reward_scaling, key.child(1))?.with_action_limit(cfg.action_limit);
    let mut ws = params.workspace();
    let mut grad = vec![0.0; params.len()];
    let mut log = Vec::with_capacity(cfg.episodes as usize);
    for episode in 0..cfg.episodes {
        let mut steps = Vec::new();
        loop {
            let b = collector.collect(&params, 1, &mut ws)?;
            let s = b.steps[0];
            steps.push(s);
            if s.terminal {
                break;
            }
        }
        let adv = compute_advantages(&Batch { steps: steps.clone(), bootstrap_value: 0.0 });
        grad.iter_mut().for_each(|g| *g = 0.0);
        reinforce_gradient(&params, &steps, &adv.targets, &adv.advantages, &mut ws, &mut grad)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        clip_global_norm(&mut grad, ppo_like.max_grad_norm);
        adam.ascend(params.as_mut_slice(), &grad);
        log.push(ReinforceRow {
            episode,
            timestep: collector.steps_taken(),
            episode_return: adv.targets.first().copied().unwrap_or(0.0),
        });
    }
    Ok((params, log))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineConfig {
    pub ppo: PpoConfig,
    pub updates: u64,
    pub eval_scenarios: u64,
    /// `false` keeps the weights frozen (the no-learning baseline).
    pub learning: bool,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self { ppo: PpoConfig::online(), updates: 20, eval_scenarios: 500, learning: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineRow {
    pub update: u64,
    pub timestep: u64,
    /// Live price at which the evaluation contracts start.
    pub spot: f64,
    pub agent: PnlStats,
    /// Same scenarios, one entry per benchmark hedger.
    pub benchmarks: Vec<PnlStats>,
}

/// Alternates frozen-policy evaluation on fresh contracts at the live price
/// with one PPO update from `K` live transitions. Row `u` is measured after
/// `u` updates; rows `0..=updates` are returned.
pub fn online_learning_run(
    params: &NetworkParams,
    eval_config: &EnvConfig,
    cfg: &OnlineConfig,
    benchmarks: &[DeltaHedger],
    runner: &dyn ScenarioRunner,
    key: StreamKey,
) -> Result<Vec<OnlineRow>> {
    let mut trainer = PpoTrainer::with_params(eval_config, &cfg.ppo, params.clone(), ContractChain::Rolling, key.child(1))?;
    let mut rows = Vec::with_capacity(cfg.updates as usize + 1);
    for u in 0..=cfg.updates {
        let mut contract = *eval_config;
        contract.market.s0 = trainer.collector().env().state().spot;
        let eval_key = key.child(2).child(u);
        let agent = evaluate_policy(
            runner,
            PolicySpec::network(trainer.params(), cfg.ppo.action_limit),
            &contract,
            cfg.eval_scenarios,
            eval_key,
        )?;
        let mut bench = Vec::with_capacity(benchmarks.len());
        for h in benchmarks {
            bench.push(evaluate_policy(runner, PolicySpec::Delta(h), &contract, cfg.eval_scenarios, eval_key)?.stats);
        }
        rows.push(OnlineRow {
            update: u,
            timestep: trainer.collector().steps_taken(),
            spot: contract.market.s0,
            agent: agent.stats,
            benchmarks: bench,
        });
        if u < cfg.updates {
            trainer.step(cfg.ppo.batch_size, cfg.learning)?;
        }
    }
    Ok(rows)
}
