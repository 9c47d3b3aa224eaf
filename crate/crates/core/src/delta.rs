//! Delta hedgers: analytic under Black-Scholes, Monte-Carlo finite differences
//! under Heston.
//!
//! All hedgers return the total number of shares held for the surviving cohort
//! and hold nothing once the cohort is extinct or the contract has matured.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::liability::{
    cfm_rider_factor, check_time, guarantee_put_delta, ifm_rider_factor, ContractTerms, McLiabilityProblem, PricingModel,
    SurvivalSampling,
};
use crate::market::{heston_step, HestonParams, HestonState, MortalityModel, PathGrid};
use crate::math::{exp, ln, sqrt};
use crate::rng::{Purpose, StreamKey};

/// Relative spot bump of the Monte-Carlo finite difference.
pub const HESTON_BUMP: f64 = 1e-2;

/// `dL_t/dS_t` for a Black-Scholes fund and a constant force of mortality `nu`.
pub fn cfm_bs_delta(t: f64, s: f64, survivors: u32, terms: &ContractTerms, r: f64, sigma: f64, nu: f64) -> Result<f64> {
    let tau = check_time(t, terms.maturity)?;
    if survivors == 0 || tau <= 0.0 {
        return Ok(0.0);
    }
    let m = terms.fee_rate;
    let f = terms.account_value(s, t);
    let per_unit_f = exp(-nu * tau) * guarantee_put_delta(f, terms.guarantee, r, m, sigma, tau)
        - terms.rider_rate * cfm_rider_factor(m, nu, tau);
    Ok(per_unit_f * terms.account_sensitivity(t) * survivors as f64)
}

/// `dL_t/dS_t` for a Black-Scholes fund and a lifetime uniform on `[0, upper]`.
pub fn ifm_bs_delta(t: f64, s: f64, survivors: u32, terms: &ContractTerms, r: f64, sigma: f64, upper: f64) -> Result<f64> {
    if terms.maturity >= upper {
        return Err(Error::MaturityBeyondLifetime { maturity: terms.maturity, upper });
    }
    let tau = check_time(t, terms.maturity)?;
    if survivors == 0 || tau <= 0.0 {
        return Ok(0.0);
    }
    let m = terms.fee_rate;
    let f = terms.account_value(s, t);
    let survival = (upper - terms.maturity) / (upper - t);
    let per_unit_f = survival * guarantee_put_delta(f, terms.guarantee, r, m, sigma, tau)
        - terms.rider_rate * ifm_rider_factor(m, upper, t, tau);
    Ok(per_unit_f * terms.account_sensitivity(t) * survivors as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McDelta {
    pub value: f64,
    pub std_error: f64,
}

/// Central finite difference of the Monte-Carlo net liability under Heston,
/// bumping the spot by `HESTON_BUMP` with common random numbers on both sides.
#[allow(clippy::too_many_arguments)]
pub fn heston_mc_delta(
    t: f64,
    s: f64,
    variance: f64,
    survivors: u32,
    terms: &ContractTerms,
    params: &HestonParams,
    mortality: MortalityModel,
    paths: u64,
    key: StreamKey,
) -> Result<McDelta> {
    if paths < 10_000 {
        return Err(Error::InvalidParameter("the Heston Delta needs at least 10^4 paths"));
    }
    let tau = check_time(t, terms.maturity)?;
    if survivors == 0 || tau <= 0.0 {
        return Ok(McDelta { value: 0.0, std_error: 0.0 });
    }
    let h = HESTON_BUMP;
    let problem = |spot: f64| McLiabilityProblem {
        t,
        account: terms.account_value(spot, t),
        survivors,
        terms,
        model: PricingModel::Heston { params: *params, variance },
        mortality,
        sampling: SurvivalSampling::Simulated,
    };
    let (up, down) = (problem(s * (1.0 + h)), problem(s * (1.0 - h)));
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for path in 0..paths {
        let (gu, ru) = up.path_value(path, key);
        let (gd, rd) = down.path_value(path, key);
        let d = ((gu - ru) - (gd - rd)) / (2.0 * h * s);
        sum += d;
        sum_sq += d * d;
    }
    let n = paths as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(McDelta { value: mean, std_error: sqrt(var / n) })
}

/// Precomputed Heston Deltas for every hedging date of a fixed grid.
///
/// The hedger prices with the instantaneous variance set to its long-run level
/// at each date, so the law of the account growth `F_T / F_t` depends only on
/// the number of remaining steps. One lockstep simulation therefore serves all
/// dates: for each horizon the simulated growth factors are sorted once and the
/// bumped put values `E[(G - F M)+]` become prefix-sum lookups. The rider part
/// is linear in the spot and is computed exactly; mortality enters through
/// expected survival, so one table serves both mortality laws.
#[derive(Debug, Clone)]
pub struct HestonDeltaTable {
    params: HestonParams,
    fee_rate: f64,
    steps: usize,
    dt: f64,
    log_lo: f64,
    log_step: f64,
    points: usize,
    /// `[horizon - 1][point]`: finite-difference slope of `E[(1 - x M)+]` in `x`.
    slopes: Vec<f64>,
}

const TABLE_LOG_LO: f64 = -2.5;
const TABLE_LOG_HI: f64 = 2.5;
const TABLE_POINTS: usize = 2001;

impl HestonDeltaTable {
    pub fn build(params: &HestonParams, fee_rate: f64, grid: &PathGrid, paths: usize, key: StreamKey) -> Result<Self> {
        params.validate()?;
        if paths < 10_000 {
            return Err(Error::InvalidParameter("the Heston Delta needs at least 10^4 paths"));
        }
        let steps = grid.steps();
        let dt = grid.dt();
        let log_step = (TABLE_LOG_HI - TABLE_LOG_LO) / (TABLE_POINTS - 1) as f64;
        let mut slopes = vec![0.0; steps * TABLE_POINTS];
        let mut states = vec![HestonState { price: 1.0, variance: params.v_bar }; paths];
        let mut rng = key.with_purpose(Purpose::Pricing).rng();
        let mut sorted = vec![0.0; paths];
        let mut prefix = vec![0.0; paths + 1];
        let drift = params.r - fee_rate;
        let h = HESTON_BUMP;
        let n = paths as f64;
        for horizon in 1..=steps {
            for st in states.iter_mut() {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                *st = heston_step(*st, params, drift, dt, z1, z2);
            }
            for (dst, st) in sorted.iter_mut().zip(&states) {
                *dst = st.price;
            }
            sorted.sort_unstable_by(f64::total_cmp);
            for i in 0..paths {
                prefix[i + 1] = prefix[i] + sorted[i];
            }
            // E[(1 - y M)+] = (c - y * sum_{M < 1/y} M) / n.
            let put = |y: f64| {
                let c = sorted.partition_point(|&m| m * y < 1.0);
                (c as f64 - y * prefix[c]) / n
            };
            let row = &mut slopes[(horizon - 1) * TABLE_POINTS..horizon * TABLE_POINTS];
            for (i, slot) in row.iter_mut().enumerate() {
                let x = exp(TABLE_LOG_LO + i as f64 * log_step);
                *slot = (put(x * (1.0 + h)) - put(x * (1.0 - h))) / (2.0 * h * x);
            }
        }
        Ok(Self { params: *params, fee_rate, steps, dt, log_lo: TABLE_LOG_LO, log_step, points: TABLE_POINTS, slopes })
    }

    pub fn params(&self) -> &HestonParams {
        &self.params
    }

    fn put_slope(&self, horizon: usize, x: f64) -> f64 {
        let row = &self.slopes[(horizon - 1) * self.points..horizon * self.points];
        let pos = ((ln(x) - self.log_lo) / self.log_step).clamp(0.0, (self.points - 1) as f64);
        let i = (pos as usize).min(self.points - 2);
        let w = pos - i as f64;
        row[i] * (1.0 - w) + row[i + 1] * w
    }

    /// Total shares held at time `t` (a grid date) with spot `s`.
    pub fn delta(&self, t: f64, s: f64, survivors: u32, terms: &ContractTerms, mortality: &MortalityModel) -> Result<f64> {
        if terms.fee_rate != self.fee_rate {
            return Err(Error::Dimension("Heston table built for another fee rate"));
        }
        let tau = check_time(t, terms.maturity)?;
        if survivors == 0 || tau <= 0.0 {
            return Ok(0.0);
        }
        let remaining = tau / self.dt;
        let horizon = libm::round(remaining) as usize;
        if horizon == 0 || horizon > self.steps || (remaining - horizon as f64).abs() > 1e-6 {
            return Err(Error::Dimension("time is not a date of the table grid"));
        }
        let r = self.params.r;
        let m = terms.fee_rate;
        let n = survivors as f64;
        let x = terms.account_value(s, t) / terms.guarantee;
        let gross = exp(-r * tau) * mortality.survival(t, terms.maturity) * self.put_slope(horizon, x);
        let mut rider_factor = 0.0;
        for j in 0..horizon {
            let u = j as f64 * self.dt;
            rider_factor += mortality.survival(t, t + u) * exp(-m * u) * self.dt;
        }
        let rider = terms.rider_rate * rider_factor;
        Ok((gross - rider) * terms.account_sensitivity(t) * n)
    }
}

/// One of the four benchmark Delta hedgers, each carrying its own model.
#[derive(Debug, Clone)]
pub enum DeltaHedger {
    CfmBs { r: f64, sigma: f64, nu: f64 },
    IfmBs { r: f64, sigma: f64, upper: f64 },
    CfmHeston { nu: f64, table: Arc<HestonDeltaTable> },
    IfmHeston { upper: f64, table: Arc<HestonDeltaTable> },
}

impl DeltaHedger {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64, what| if x > 0.0 && x.is_finite() { Ok(()) } else { Err(Error::InvalidParameter(what)) };
        match self {
            DeltaHedger::CfmBs { sigma, nu, .. } => {
                positive(*sigma, "volatility must be positive")?;
                positive(*nu, "force of mortality must be positive")
            }
            DeltaHedger::IfmBs { sigma, upper, .. } => {
                positive(*sigma, "volatility must be positive")?;
                positive(*upper, "lifetime bound must be positive")
            }
            DeltaHedger::CfmHeston { nu, .. } => positive(*nu, "force of mortality must be positive"),
            DeltaHedger::IfmHeston { upper, .. } => positive(*upper, "lifetime bound must be positive"),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            DeltaHedger::CfmBs { .. } => "cfm-bs",
            DeltaHedger::IfmBs { .. } => "ifm-bs",
            DeltaHedger::CfmHeston { .. } => "cfm-heston",
            DeltaHedger::IfmHeston { .. } => "ifm-heston",
        }
    }

    /// Total shares to hold at `t` given the spot and current survivors.
    pub fn shares(&self, t: f64, s: f64, survivors: u32, terms: &ContractTerms) -> Result<f64> {
        match self {
            DeltaHedger::CfmBs { r, sigma, nu } => cfm_bs_delta(t, s, survivors, terms, *r, *sigma, *nu),
            DeltaHedger::IfmBs { r, sigma, upper } => ifm_bs_delta(t, s, survivors, terms, *r, *sigma, *upper),
            DeltaHedger::CfmHeston { nu, table } => table.delta(t, s, survivors, terms, &MortalityModel::Constant { force: *nu }),
            DeltaHedger::IfmHeston { upper, table } => {
                if terms.maturity >= *upper {
                    return Err(Error::MaturityBeyondLifetime { maturity: terms.maturity, upper: *upper });
                }
                table.delta(t, s, survivors, terms, &MortalityModel::Uniform { lower: 0.0, upper: *upper })
            }
        }
    }
}
