//! Risky-asset paths and policyholder deaths.
//!
//! All simulators take a `&mut R: Rng` so the caller controls which keyed
//! stream ([`crate::rng::StreamKey`]) they consume.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::math::{abs, exp, ln, positive_part, sqrt};

/// Hedging dates per year.
pub const TRADING_DAYS: f64 = 252.0;

/// Black-Scholes market: `dS = mu S dt + sigma S dW`, money account at rate `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsParams {
    pub r: f64,
    pub s0: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl BsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidParameter("sigma must be positive"));
        }
        if !(self.s0 > 0.0) {
            return Err(Error::InvalidParameter("S0 must be positive"));
        }
        if !self.r.is_finite() || !self.mu.is_finite() {
            return Err(Error::InvalidParameter("r and mu must be finite"));
        }
        Ok(())
    }
}

/// Heston market with correlated Brownian drivers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HestonParams {
    pub r: f64,
    pub s0: f64,
    pub mu: f64,
    /// Initial variance.
    pub v0: f64,
    /// Mean-reversion speed of the variance.
    pub kappa: f64,
    /// Long-run variance.
    pub v_bar: f64,
    /// Volatility of variance.
    pub eta: f64,
    /// Correlation between the price and variance drivers.
    pub correlation: f64,
}

impl HestonParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.s0 > 0.0) {
            return Err(Error::InvalidParameter("S0 must be positive"));
        }
        if !(self.v0 >= 0.0 && self.kappa >= 0.0 && self.v_bar >= 0.0 && self.eta >= 0.0) {
            return Err(Error::InvalidParameter("Heston v0, kappa, v_bar and eta must be non-negative"));
        }
        if !(abs(self.correlation) <= 1.0) {
            return Err(Error::InvalidParameter("correlation must lie in [-1, 1]"));
        }
        Ok(())
    }
}

/// Law of a policyholder's remaining lifetime, measured on the contract clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MortalityModel {
    /// Constant force of mortality `force` per year.
    Constant { force: f64 },
    /// Lifetime uniform on `[lower, upper]`: increasing force of mortality.
    Uniform { lower: f64, upper: f64 },
}

impl MortalityModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MortalityModel::Constant { force } if !(force > 0.0) => {
                Err(Error::InvalidParameter("force of mortality must be positive"))
            }
            MortalityModel::Uniform { lower, upper } if !(lower >= 0.0 && lower < upper) => {
                Err(Error::InvalidParameter("uniform lifetime needs 0 <= lower < upper"))
            }
            _ => Ok(()),
        }
    }

    /// Probability of surviving to `s` given alive at `t` (`t <= s`).
    pub fn survival(&self, t: f64, s: f64) -> f64 {
        match *self {
            MortalityModel::Constant { force } => exp(-force * (s - t)),
            MortalityModel::Uniform { upper, .. } => {
                if s >= upper || t >= upper {
                    0.0
                } else {
                    (upper - s) / (upper - t)
                }
            }
        }
    }

    /// Probability that a policyholder alive at `t0` dies in `(t0, t1]`.
    pub fn step_death_probability(&self, t0: f64, t1: f64) -> f64 {
        match *self {
            MortalityModel::Constant { force } => -crate::math::expm1(-force * (t1 - t0)),
            MortalityModel::Uniform { .. } => 1.0 - self.survival(t0, t1),
        }
    }
}

/// Uniform time grid `t_0 = 0 < t_1 < ... < t_n = T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGrid {
    n: usize,
    dt: f64,
}

impl PathGrid {
    pub fn new(n: usize, maturity: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("grid needs at least one step"));
        }
        if !(maturity > 0.0) || !maturity.is_finite() {
            return Err(Error::InvalidParameter("maturity must be positive"));
        }
        Ok(Self { n, dt: maturity / n as f64 })
    }

    /// Daily hedging: `round(252 T)` steps.
    pub fn daily(maturity: f64) -> Result<Self> {
        let n = libm::round(maturity * TRADING_DAYS) as usize;
        Self::new(n.max(1), maturity)
    }

    #[inline]
    pub fn steps(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[inline]
    pub fn maturity(&self) -> f64 {
        self.dt * self.n as f64
    }

    /// `t_k`; the last point is exactly the maturity.
    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        if k >= self.n {
            self.maturity()
        } else {
            k as f64 * self.dt
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n).map(|k| self.time(k)).collect()
    }
}

/// One exact log-normal step of length `dt` driven by the standard normal `z`.
#[inline]
pub fn bs_step(s: f64, mu: f64, sigma: f64, dt: f64, z: f64) -> f64 {
    s * exp((mu - 0.5 * sigma * sigma) * dt + sigma * sqrt(dt) * z)
}

pub fn simulate_bs_path<R: Rng + ?Sized>(params: &BsParams, grid: &PathGrid, rng: &mut R) -> Vec<f64> {
    let mut path = Vec::with_capacity(grid.steps() + 1);
    let mut s = params.s0;
    path.push(s);
    for _ in 0..grid.steps() {
        let z: f64 = StandardNormal.sample(rng);
        s = bs_step(s, params.mu, params.sigma, grid.dt(), z);
        path.push(s);
    }
    path
}

/// State of a full-truncation Euler Heston discretisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HestonState {
    pub price: f64,
    /// Raw scheme variance; may dip below zero, only its positive part is used.
    pub variance: f64,
}

impl HestonState {
    #[inline]
    pub fn reported_variance(&self) -> f64 {
        positive_part(self.variance)
    }
}

/// Advances one full-truncation Euler step with drift `drift` on the price
/// (`mu` under P, `r` or `r - m` under Q) and independent normals `z1`, `z2`.
#[inline]
pub fn heston_step(state: HestonState, params: &HestonParams, drift: f64, dt: f64, z1: f64, z2: f64) -> HestonState {
    let v = positive_part(state.variance);
    let sqrt_v_dt = sqrt(v * dt);
    let rho = params.correlation;
    let w2 = rho * z1 + sqrt(1.0 - rho * rho) * z2;
    HestonState {
        price: state.price * exp((drift - 0.5 * v) * dt + sqrt_v_dt * z1),
        variance: state.variance + params.kappa * (params.v_bar - v) * dt + params.eta * sqrt_v_dt * w2,
    }
}

/// Price and (truncated) variance paths under the physical drift `mu`.
pub fn simulate_heston_path<R: Rng + ?Sized>(params: &HestonParams, grid: &PathGrid, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let mut prices = Vec::with_capacity(grid.steps() + 1);
    let mut variances = Vec::with_capacity(grid.steps() + 1);
    let mut state = HestonState { price: params.s0, variance: params.v0 };
    prices.push(state.price);
    variances.push(state.reported_variance());
    for _ in 0..grid.steps() {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        state = heston_step(state, params, params.mu, grid.dt(), z1, z2);
        prices.push(state.price);
        variances.push(state.reported_variance());
    }
    (prices, variances)
}

/// Number of deaths in `(t0, t1]` among `alive` independent lives.
#[inline]
pub fn sample_step_deaths<R: Rng + ?Sized>(model: &MortalityModel, alive: u32, t0: f64, t1: f64, rng: &mut R) -> u32 {
    if alive == 0 {
        return 0;
    }
    let p = model.step_death_probability(t0, t1);
    if p <= 0.0 {
        0
    } else if p >= 1.0 {
        alive
    } else {
        // Binomial::new only fails for p outside [0, 1].
        Binomial::new(alive as u64, p).map(|b| b.sample(rng) as u32).unwrap_or(0)
    }
}

/// Survivor counts at every grid time, starting from `n`.
pub fn simulate_deaths<R: Rng + ?Sized>(model: &MortalityModel, n: u32, grid: &PathGrid, rng: &mut R) -> Result<Vec<u32>> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one policyholder"));
    }
    let mut out = Vec::with_capacity(grid.steps() + 1);
    let mut alive = n;
    out.push(alive);
    for k in 0..grid.steps() {
        alive -= sample_step_deaths(model, alive, grid.time(k), grid.time(k + 1), rng);
        out.push(alive);
    }
    Ok(out)
}

/// Log-increments of a price path.
pub fn log_increments(path: &[f64]) -> Vec<f64> {
    path.windows(2).map(|w| ln(w[1] / w[0])).collect()
}
