//! The discrete-time hedging MDP.
//!
//! At each hedging date the agent observes six normalised features, chooses a
//! holding in the risky asset, and receives the anchor-hedging reward
//! `(P_k - L_k)^2 - (P_{k+1} - L_{k+1})^2`. Rewards telescope, so an episode's
//! return is minus the squared terminal P&L. The fund follows Black-Scholes
//! under the physical drift; the net liability comes from the closed form of
//! the configured mortality law.

use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::delta::DeltaHedger;
use crate::error::{Error, Result};
use crate::liability::{bs_net_liability, ContractTerms};
use crate::market::{bs_step, sample_step_deaths, BsParams, MortalityModel, PathGrid};
use crate::math::exp;
use crate::rng::{Purpose, SimRng, StreamKey};

pub const OBS_DIM: usize = 6;
pub type Observation = [f64; OBS_DIM];

/// Unit of the action handed to [`HedgingEnv::step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActionScale {
    /// Shares per initial policyholder; the environment multiplies by `N`.
    #[default]
    PerInitialPolicyholder,
    /// Total shares.
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvConfig {
    pub market: BsParams,
    pub mortality: MortalityModel,
    pub terms: ContractTerms,
    pub grid: PathGrid,
    pub action_scale: ActionScale,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        self.mortality.validate()?;
        self.terms.validate()?;
        if (self.grid.maturity() - self.terms.maturity).abs() > 1e-9 * self.terms.maturity {
            return Err(Error::InvalidParameter("grid and contract maturities differ"));
        }
        if let MortalityModel::Uniform { upper, .. } = self.mortality {
            if self.terms.maturity >= upper {
                return Err(Error::MaturityBeyondLifetime { maturity: self.terms.maturity, upper });
            }
        }
        Ok(())
    }

    /// Converts an action into total shares.
    #[inline]
    pub fn total_shares(&self, action: f64) -> f64 {
        match self.action_scale {
            ActionScale::PerInitialPolicyholder => action * self.terms.policyholders as f64,
            ActionScale::Total => action,
        }
    }

    /// Converts total shares into an action.
    #[inline]
    pub fn action_from_shares(&self, shares: f64) -> f64 {
        match self.action_scale {
            ActionScale::PerInitialPolicyholder => shares / self.terms.policyholders as f64,
            ActionScale::Total => shares,
        }
    }

    fn liability(&self, t: f64, account: f64, survivors: u32) -> Result<f64> {
        Ok(bs_net_liability(t, account, survivors, &self.terms, self.market.r, self.market.sigma, &self.mortality)?.net)
    }
}

/// Raw state at a hedging date.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeState {
    pub k: usize,
    pub t: f64,
    pub spot: f64,
    pub account: f64,
    pub portfolio: f64,
    pub survivors: u32,
    pub deaths_this_step: u32,
    /// Net liability `L_k`.
    pub liability: f64,
    pub terminal: bool,
}

impl EpisodeState {
    pub fn observation(&self, config: &EnvConfig) -> Observation {
        let g = config.terms.guarantee;
        let n = config.terms.policyholders as f64;
        [
            self.account / g,
            self.spot / g,
            self.portfolio / n,
            self.survivors as f64 / n,
            self.deaths_this_step as f64 / n,
            (config.terms.maturity - self.t).max(0.0),
        ]
    }

    /// `P_k - L_k`.
    #[inline]
    pub fn pnl(&self) -> f64 {
        self.portfolio - self.liability
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub terminal: bool,
    /// Total shares actually held over the step.
    pub shares: f64,
}

/// One environment instance, owning its price and death streams.
#[derive(Debug, Clone)]
pub struct HedgingEnv {
    config: EnvConfig,
    state: EpisodeState,
    price_rng: SimRng,
    death_rng: SimRng,
}

impl HedgingEnv {
    /// Starts an episode at `t = 0` with the full cohort alive and the hedging
    /// portfolio funded by the initial net liability, `P_0 = L_0`. With a
    /// calibrated rider charge `L_0 = 0`; otherwise the P&L measures hedging
    /// error only, not the mispricing of the contract.
    pub fn reset(config: &EnvConfig, key: StreamKey) -> Result<Self> {
        config.validate()?;
        let spot = config.market.s0;
        let account = config.terms.account_value(spot, 0.0);
        let survivors = config.terms.policyholders;
        let liability = config.liability(0.0, account, survivors)?;
        let state = EpisodeState {
            k: 0,
            t: 0.0,
            spot,
            account,
            portfolio: liability,
            survivors,
            deaths_this_step: 0,
            liability,
            terminal: false,
        };
        Ok(Self {
            config: *config,
            state,
            price_rng: key.with_purpose(Purpose::Price).rng(),
            death_rng: key.with_purpose(Purpose::Deaths).rng(),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &EpisodeState {
        &self.state
    }

    pub fn observation(&self) -> Observation {
        self.state.observation(&self.config)
    }

    /// Holds `action` (in the configured scale) over `(t_k, t_{k+1}]`.
    pub fn step(&mut self, action: f64) -> Result<StepOutcome> {
        if self.state.terminal {
            return Err(Error::EpisodeTerminated);
        }
        if !action.is_finite() {
            return Err(Error::NonFiniteInput(0));
        }
        let cfg = &self.config;
        let s = self.state;
        let dt = cfg.grid.dt();
        let t1 = cfg.grid.time(s.k + 1);
        let shares = if s.survivors == 0 { 0.0 } else { cfg.total_shares(action) };

        let z: f64 = StandardNormal.sample(&mut self.price_rng);
        let spot = bs_step(s.spot, cfg.market.mu, cfg.market.sigma, dt, z);
        let deaths = sample_step_deaths(&cfg.mortality, s.survivors, s.t, t1, &mut self.death_rng);
        let survivors = s.survivors - deaths;

        let growth = exp(cfg.market.r * dt);
        let rider = cfg.terms.rider_rate * s.account * s.survivors as f64 * dt;
        let portfolio = (s.portfolio - shares * s.spot) * growth + shares * spot + rider * growth;
        let account = cfg.terms.account_value(spot, t1);
        let liability = cfg.liability(t1, account, survivors)?;

        let terminal = survivors == 0 || s.k + 1 == cfg.grid.steps();
        let before = s.pnl();
        let after = portfolio - liability;
        self.state = EpisodeState {
            k: s.k + 1,
            t: t1,
            spot,
            account,
            portfolio,
            survivors,
            deaths_this_step: deaths,
            liability,
            terminal,
        };
        Ok(StepOutcome { reward: before * before - after * after, terminal, shares })
    }
}

/// Anything that picks an action from the current state.
pub trait Policy {
    /// Action in `config.action_scale` units.
    fn act(&mut self, state: &EpisodeState, obs: &Observation, config: &EnvConfig) -> Result<f64>;
}

/// Holds nothing: the unhedged baseline.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn act(&mut self, _: &EpisodeState, _: &Observation, _: &EnvConfig) -> Result<f64> {
        Ok(0.0)
    }
}

/// Holds the Delta of a (possibly misspecified) model.
#[derive(Debug, Clone)]
pub struct DeltaPolicy<'a>(pub &'a DeltaHedger);

impl Policy for DeltaPolicy<'_> {
    fn act(&mut self, state: &EpisodeState, _: &Observation, config: &EnvConfig) -> Result<f64> {
        let shares = self.0.shares(state.t, state.spot, state.survivors, &config.terms)?;
        Ok(config.action_from_shares(shares))
    }
}

/// Wraps a closure over the raw state and observation.
pub struct FnPolicy<F>(pub F);

impl<F: FnMut(&EpisodeState, &Observation) -> f64> Policy for FnPolicy<F> {
    fn act(&mut self, state: &EpisodeState, obs: &Observation, _: &EnvConfig) -> Result<f64> {
        Ok((self.0)(state, obs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: f64,
    pub reward: f64,
    pub next_obs: Observation,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub transitions: Vec<Transition>,
    /// `P - L` when the episode ends.
    pub terminal_pnl: f64,
}

/// Rolls one full episode, recording every transition.
pub fn run_episode<P: Policy + ?Sized>(config: &EnvConfig, policy: &mut P, key: StreamKey) -> Result<EpisodeRecord> {
    let mut env = HedgingEnv::reset(config, key)?;
    let mut transitions = Vec::with_capacity(config.grid.steps());
    loop {
        let obs = env.observation();
        let action = policy.act(env.state(), &obs, config)?;
        let out = env.step(action)?;
        transitions.push(Transition { obs, action, reward: out.reward, next_obs: env.observation(), terminal: out.terminal });
        if out.terminal {
            return Ok(EpisodeRecord { transitions, terminal_pnl: env.state().pnl() });
        }
    }
}

/// Terminal P&L of one episode without recording transitions.
pub fn episode_pnl<P: Policy + ?Sized>(config: &EnvConfig, policy: &mut P, key: StreamKey) -> Result<f64> {
    let mut env = HedgingEnv::reset(config, key)?;
    loop {
        let obs = env.observation();
        let action = policy.act(env.state(), &obs, config)?;
        if env.step(action)?.terminal {
            return Ok(env.state().pnl());
        }
    }
}
