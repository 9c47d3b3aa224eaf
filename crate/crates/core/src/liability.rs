//! Valuation of the insurer's GMMB net liability.
//!
//! `L_t = V_GL - V_RC`: the risk-neutral value of the maturity guarantee paid
//! to survivors minus the value of the rider charges still to be collected.
//! Closed forms exist for Black-Scholes funds under both mortality laws; the
//! Monte-Carlo oracle covers everything (including Heston) and is the
//! independent check on the closed forms.

use core::ops::Range;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::market::{heston_step, sample_step_deaths, BsParams, HestonParams, HestonState, MortalityModel, TRADING_DAYS};
use crate::math::{exp, expm1, ln, norm_cdf, positive_part, sqrt};
use crate::rng::{Purpose, StreamKey};

/// Homogeneous GMMB contract terms shared by every policyholder of a cohort.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractTerms {
    /// Minimum guarantee `G` paid at maturity.
    pub guarantee: f64,
    /// Units of the risky asset bought per policyholder (`F_0 = shares * S_0`).
    pub shares: f64,
    /// Asset-based fee rate `m` deducted from the account.
    pub fee_rate: f64,
    /// Part of the fee funding the guarantee, `m_e`.
    pub rider_rate: f64,
    pub maturity: f64,
    /// Initial number of policyholders `N`.
    pub policyholders: u32,
    /// Initial age; bookkeeping only.
    pub age: f64,
}

impl ContractTerms {
    pub fn validate(&self) -> Result<()> {
        if !(self.guarantee > 0.0) {
            return Err(Error::InvalidParameter("guarantee must be positive"));
        }
        if !(self.shares > 0.0) {
            return Err(Error::InvalidParameter("shares per policyholder must be positive"));
        }
        if !(self.fee_rate > 0.0 && self.fee_rate < 1.0) {
            return Err(Error::InvalidParameter("fee rate must lie in (0, 1)"));
        }
        if !(self.rider_rate > 0.0 && self.rider_rate <= self.fee_rate) {
            return Err(Error::InvalidParameter("rider charge must lie in (0, m]"));
        }
        if !(self.maturity > 0.0) {
            return Err(Error::InvalidParameter("maturity must be positive"));
        }
        if self.policyholders == 0 {
            return Err(Error::InvalidParameter("need at least one policyholder"));
        }
        Ok(())
    }

    /// Account value `F_t = shares * S_t * e^{-m t}` of one policyholder.
    #[inline]
    pub fn account_value(&self, spot: f64, t: f64) -> f64 {
        self.shares * spot * exp(-self.fee_rate * t)
    }

    /// `dF_t / dS_t`.
    #[inline]
    pub fn account_sensitivity(&self, t: f64) -> f64 {
        self.shares * exp(-self.fee_rate * t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiabilityDecomposition {
    /// Value of the discounted future gross liability.
    pub gross: f64,
    /// Value of the discounted future rider charges.
    pub rider: f64,
    /// `gross - rider`.
    pub net: f64,
}

impl LiabilityDecomposition {
    pub const ZERO: Self = Self { gross: 0.0, rider: 0.0, net: 0.0 };

    #[inline]
    pub fn new(gross: f64, rider: f64) -> Self {
        Self { gross, rider, net: gross - rider }
    }
}

const TIME_EPS: f64 = 1e-12;

pub(crate) fn check_time(t: f64, maturity: f64) -> Result<f64> {
    if !(t >= -TIME_EPS && t <= maturity + TIME_EPS) {
        return Err(Error::TimeOutOfRange { t, maturity });
    }
    Ok((maturity - t).max(0.0))
}

fn check_account(f: f64) -> Result<()> {
    if !(f >= 0.0) || !f.is_finite() {
        return Err(Error::InvalidParameter("account value must be finite and non-negative"));
    }
    Ok(())
}

/// `d1` of the guarantee put on an account drifting at `r - m` under Q.
#[inline]
pub(crate) fn d1(f: f64, g: f64, r: f64, m: f64, sigma: f64, tau: f64) -> f64 {
    (ln(f / g) + (r - m + 0.5 * sigma * sigma) * tau) / (sigma * sqrt(tau))
}

/// Per-survivor value of `(G - F_T)+` at time-to-maturity `tau`, before the
/// survival factor. Collapses to the intrinsic value at `tau = 0`.
pub(crate) fn guarantee_put(f: f64, g: f64, r: f64, m: f64, sigma: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return positive_part(g - f);
    }
    let d1 = d1(f, g, r, m, sigma, tau);
    let d2 = d1 - sigma * sqrt(tau);
    g * exp(-r * tau) * norm_cdf(-d2) - f * exp(-m * tau) * norm_cdf(-d1)
}

/// `d/dF` of [`guarantee_put`].
pub(crate) fn guarantee_put_delta(f: f64, g: f64, r: f64, m: f64, sigma: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return if f < g { -1.0 } else { 0.0 };
    }
    -exp(-m * tau) * norm_cdf(-d1(f, g, r, m, sigma, tau))
}

/// `int_0^tau e^{-(m + nu) s} ds`: rider-charge annuity factor under a constant force.
#[inline]
pub(crate) fn cfm_rider_factor(m: f64, nu: f64, tau: f64) -> f64 {
    -expm1(-(m + nu) * tau) / (m + nu)
}

/// `int_t^T e^{-m (s - t)} (b - s) / (b - t) ds` for a lifetime uniform up to `b`.
pub(crate) fn ifm_rider_factor(m: f64, upper: f64, t: f64, tau: f64) -> f64 {
    let b = upper - t;
    let decay = exp(-m * tau);
    ((b - 1.0 / m) * (-expm1(-m * tau)) / m + tau * decay / m) / b
}

/// Black-Scholes fund, constant force of mortality `nu`.
pub fn bs_cfm_net_liability(
    t: f64,
    f: f64,
    survivors: u32,
    terms: &ContractTerms,
    r: f64,
    sigma: f64,
    nu: f64,
) -> Result<LiabilityDecomposition> {
    let tau = check_time(t, terms.maturity)?;
    check_account(f)?;
    if survivors == 0 {
        return Ok(LiabilityDecomposition::ZERO);
    }
    let n = survivors as f64;
    if tau <= 0.0 {
        return Ok(LiabilityDecomposition::new(positive_part(terms.guarantee - f) * n, 0.0));
    }
    let m = terms.fee_rate;
    let gross = exp(-nu * tau) * guarantee_put(f, terms.guarantee, r, m, sigma, tau) * n;
    let rider = terms.rider_rate * f * n * cfm_rider_factor(m, nu, tau);
    Ok(LiabilityDecomposition::new(gross, rider))
}

/// Black-Scholes fund, lifetime uniform on `[0, upper]` (measured on the contract clock).
pub fn ifm_bs_net_liability(
    t: f64,
    f: f64,
    survivors: u32,
    terms: &ContractTerms,
    r: f64,
    sigma: f64,
    upper: f64,
) -> Result<LiabilityDecomposition> {
    if terms.maturity >= upper {
        return Err(Error::MaturityBeyondLifetime { maturity: terms.maturity, upper });
    }
    let tau = check_time(t, terms.maturity)?;
    check_account(f)?;
    if survivors == 0 {
        return Ok(LiabilityDecomposition::ZERO);
    }
    let n = survivors as f64;
    if tau <= 0.0 {
        return Ok(LiabilityDecomposition::new(positive_part(terms.guarantee - f) * n, 0.0));
    }
    let m = terms.fee_rate;
    let survival = (upper - terms.maturity) / (upper - t);
    let gross = survival * guarantee_put(f, terms.guarantee, r, m, sigma, tau) * n;
    let rider = terms.rider_rate * f * n * ifm_rider_factor(m, upper, t, tau);
    Ok(LiabilityDecomposition::new(gross, rider))
}

/// Closed-form net liability of a Black-Scholes fund under either mortality law.
pub fn bs_net_liability(
    t: f64,
    f: f64,
    survivors: u32,
    terms: &ContractTerms,
    r: f64,
    sigma: f64,
    mortality: &MortalityModel,
) -> Result<LiabilityDecomposition> {
    match *mortality {
        MortalityModel::Constant { force } => bs_cfm_net_liability(t, f, survivors, terms, r, sigma, force),
        MortalityModel::Uniform { upper, .. } => ifm_bs_net_liability(t, f, survivors, terms, r, sigma, upper),
    }
}

/// Risk-neutral fund dynamics used by the Monte-Carlo pricer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PricingModel {
    BlackScholes {
        r: f64,
        sigma: f64,
    },
    /// Heston dynamics started from instantaneous variance `variance`.
    Heston {
        params: HestonParams,
        variance: f64,
    },
}

impl PricingModel {
    pub fn black_scholes(p: &BsParams) -> Self {
        PricingModel::BlackScholes { r: p.r, sigma: p.sigma }
    }

    pub fn rate(&self) -> f64 {
        match self {
            PricingModel::BlackScholes { r, .. } => *r,
            PricingModel::Heston { params, .. } => params.r,
        }
    }
}

/// How the pricer treats the survivor process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurvivalSampling {
    /// Simulate deaths step by step.
    Simulated,
    /// Replace the survivor count by its conditional expectation.
    Expected,
}

/// Running sums of per-path gross and rider values. Chunks merge exactly,
/// so any partition of the path range gives the same estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct McAccumulator {
    pub paths: u64,
    pub sum_gross: f64,
    pub sum_rider: f64,
    pub sum_gross_sq: f64,
    pub sum_rider_sq: f64,
    pub sum_net_sq: f64,
}

impl McAccumulator {
    #[inline]
    fn push(&mut self, gross: f64, rider: f64) {
        let net = gross - rider;
        self.paths += 1;
        self.sum_gross += gross;
        self.sum_rider += rider;
        self.sum_gross_sq += gross * gross;
        self.sum_rider_sq += rider * rider;
        self.sum_net_sq += net * net;
    }

    pub fn merge(mut self, other: &McAccumulator) -> Self {
        self.paths += other.paths;
        self.sum_gross += other.sum_gross;
        self.sum_rider += other.sum_rider;
        self.sum_gross_sq += other.sum_gross_sq;
        self.sum_rider_sq += other.sum_rider_sq;
        self.sum_net_sq += other.sum_net_sq;
        self
    }

    pub fn estimate(&self) -> McEstimate {
        let n = self.paths as f64;
        let mg = self.sum_gross / n;
        let mr = self.sum_rider / n;
        let se = |sum_sq: f64, mean: f64| sqrt(positive_part(sum_sq / n - mean * mean) / (n - 1.0).max(1.0));
        McEstimate {
            value: LiabilityDecomposition::new(mg, mr),
            se_gross: se(self.sum_gross_sq, mg),
            se_rider: se(self.sum_rider_sq, mr),
            se_net: se(self.sum_net_sq, mg - mr),
            paths: self.paths,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: LiabilityDecomposition,
    pub se_gross: f64,
    pub se_rider: f64,
    pub se_net: f64,
    pub paths: u64,
}

/// Everything the Monte-Carlo pricer needs besides the path range.
#[derive(Debug, Clone, Copy)]
pub struct McLiabilityProblem<'a> {
    pub t: f64,
    pub account: f64,
    pub survivors: u32,
    pub terms: &'a ContractTerms,
    pub model: PricingModel,
    pub mortality: MortalityModel,
    pub sampling: SurvivalSampling,
}

impl McLiabilityProblem<'_> {
    /// Pricing steps from `t` to maturity, at most one trading day apart.
    fn steps(&self) -> (usize, f64) {
        let tau = (self.terms.maturity - self.t).max(0.0);
        let n = libm::ceil(tau * TRADING_DAYS - 1e-9).max(1.0) as usize;
        (n, tau / n as f64)
    }

    /// Accumulates paths `range` (path `i` always uses the streams keyed by `i`).
    pub fn accumulate(&self, range: Range<u64>, key: StreamKey) -> McAccumulator {
        let mut acc = McAccumulator::default();
        for path in range {
            let (gross, rider) = self.path_value(path, key);
            acc.push(gross, rider);
        }
        acc
    }

    /// Discounted gross liability and rider charges along path `path`.
    pub fn path_value(&self, path: u64, key: StreamKey) -> (f64, f64) {
        let (steps, dt) = self.steps();
        let r = self.model.rate();
        let drift = r - self.terms.fee_rate;
        let sqrt_dt = sqrt(dt);
        let tau = (self.terms.maturity - self.t).max(0.0);
        let discount_step = exp(-r * dt);
        let mut price_rng = key.with_index(path).with_purpose(Purpose::Pricing).rng();
        let mut death_rng = key.with_index(path).with_purpose(Purpose::Deaths).rng();
        let mut f = self.account;
        let mut variance = match self.model {
            PricingModel::Heston { variance, .. } => variance,
            PricingModel::BlackScholes { .. } => 0.0,
        };
        let mut alive = self.survivors;
        let mut discount = 1.0;
        let mut rider = 0.0;
        for k in 0..steps {
            let s0 = self.t + k as f64 * dt;
            let s1 = if k + 1 == steps { self.terms.maturity } else { s0 + dt };
            let weight = match self.sampling {
                SurvivalSampling::Simulated => alive as f64,
                SurvivalSampling::Expected => self.survivors as f64 * self.mortality.survival(self.t, s0),
            };
            rider += self.terms.rider_rate * f * weight * dt * discount;
            match self.model {
                PricingModel::BlackScholes { sigma, .. } => {
                    let z: f64 = StandardNormal.sample(&mut price_rng);
                    f *= exp((drift - 0.5 * sigma * sigma) * dt + sigma * sqrt_dt * z);
                }
                PricingModel::Heston { ref params, .. } => {
                    let z1: f64 = StandardNormal.sample(&mut price_rng);
                    let z2: f64 = StandardNormal.sample(&mut price_rng);
                    let next = heston_step(HestonState { price: f, variance }, params, drift, dt, z1, z2);
                    f = next.price;
                    variance = next.variance;
                }
            }
            if self.sampling == SurvivalSampling::Simulated {
                alive -= sample_step_deaths(&self.mortality, alive, s0, s1, &mut death_rng);
            }
            discount *= discount_step;
        }
        let alive_at_maturity = match self.sampling {
            SurvivalSampling::Simulated => alive as f64,
            SurvivalSampling::Expected => self.survivors as f64 * self.mortality.survival(self.t, self.terms.maturity),
        };
        let gross = exp(-r * tau) * positive_part(self.terms.guarantee - f) * alive_at_maturity;
        (gross, rider)
    }
}

/// Monte-Carlo net liability with standard errors, simulating the survivor process.
///
/// The fund follows its risk-neutral dynamics (drift `r - m`); rider charges
/// accrue on the left endpoint of every pricing step.
#[allow(clippy::too_many_arguments)]
pub fn mc_net_liability_oracle(
    t: f64,
    f: f64,
    survivors: u32,
    terms: &ContractTerms,
    model: PricingModel,
    mortality: MortalityModel,
    paths: u64,
    key: StreamKey,
) -> Result<McEstimate> {
    if paths < 1000 {
        return Err(Error::InvalidParameter("the oracle needs at least 1000 paths"));
    }
    check_time(t, terms.maturity)?;
    check_account(f)?;
    let problem = McLiabilityProblem { t, account: f, survivors, terms, model, mortality, sampling: SurvivalSampling::Simulated };
    Ok(problem.accumulate(0..paths, key).estimate())
}

/// Solves `L_0(m_e) = 0` for the rider-charge rate by bisection on `(0, m]`.
///
/// `L_0` is affine and decreasing in `m_e`, so the root is unique when it exists.
pub fn calibrate_rider_charge(terms: &ContractTerms, market: &BsParams, mortality: &MortalityModel) -> Result<f64> {
    let mut probe = *terms;
    probe.rider_rate = terms.fee_rate;
    probe.validate()?;
    market.validate()?;
    mortality.validate()?;
    let f0 = probe.account_value(market.s0, 0.0);
    let n = probe.policyholders;
    let net_at = |me: f64| -> Result<f64> {
        let mut c = probe;
        c.rider_rate = me;
        Ok(bs_net_liability(0.0, f0, n, &c, market.r, market.sigma, mortality)?.net)
    };
    let at_max = net_at(terms.fee_rate)?;
    if at_max > 0.0 {
        return Err(Error::GuaranteeTooExpensive { net_at_max: at_max });
    }
    // Bisect to machine precision so L_0 is zero up to rounding.
    let (mut lo, mut hi) = (0.0, terms.fee_rate);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = net_at(mid)?;
        if v == 0.0 {
            return Ok(mid);
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
