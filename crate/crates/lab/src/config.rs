//! Run configuration files.
//!
//! A run is described by one TOML file. Every table mirrors a core type; keys
//! left out take the documented defaults of the baseline study (see
//! [`RunConfig::baseline`] and the README).

use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use vahedge_core::delta::{DeltaHedger, HestonDeltaTable};
use vahedge_core::env::{ActionScale, EnvConfig};
use vahedge_core::evalharness::Override;
use vahedge_core::liability::{calibrate_rider_charge, ContractTerms};
use vahedge_core::market::{BsParams, HestonParams, MortalityModel, PathGrid};
use vahedge_core::neuralnet::{Activation, Architecture};
use vahedge_core::policygrad::{AdvantageNorm, OnlineConfig, PpoConfig, RewardScaling};
use vahedge_core::rng::StreamKey;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every random stream in the run.
    pub seed: u64,
    pub market: MarketSection,
    pub actuarial: ActuarialSection,
    #[serde(default)]
    pub trainer: TrainerSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub benchmarks: BenchmarkSection,
    #[serde(default)]
    pub online: OnlineSection,
    #[serde(default)]
    pub sensitivity: SensitivitySection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    pub r: f64,
    pub s0: f64,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MortalitySection {
    Constant { force: f64 },
    Uniform { lower: f64, upper: f64 },
}

impl From<MortalitySection> for MortalityModel {
    fn from(m: MortalitySection) -> Self {
        match m {
            MortalitySection::Constant { force } => MortalityModel::Constant { force },
            MortalitySection::Uniform { lower, upper } => MortalityModel::Uniform { lower, upper },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuarialSection {
    pub mortality: MortalitySection,
    pub policyholders: u32,
    pub age: f64,
    pub maturity: f64,
    pub guarantee: f64,
    /// Units of the risky asset per policyholder, `rho`.
    pub shares: f64,
    pub fee_rate: f64,
    /// Rider-charge rate; calibrated to a zero initial net liability when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rider_rate: Option<f64>,
    #[serde(default = "default_hedges_per_year")]
    pub hedges_per_year: u32,
}

fn default_hedges_per_year() -> u32 {
    252
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub clip: f64,
    pub vf_coef: f64,
    pub entropy_coef: f64,
    pub total_timesteps: u64,
    pub max_grad_norm: f64,
    pub reward_scaling: RewardScalingTag,
    pub shared: Vec<usize>,
    pub policy: Vec<usize>,
    pub value: Vec<usize>,
    pub head_gain: f64,
    pub initial_std: f64,
    pub advantage_norm: AdvantageNormTag,
    pub action_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardScalingTag {
    Raw,
    PerPolicyholder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdvantageNormTag {
    Off,
    Scale,
    Standardize,
}

impl Default for TrainerSection {
    fn default() -> Self {
        Self::from_ppo(&PpoConfig::default())
    }
}

impl TrainerSection {
    pub fn from_ppo(p: &PpoConfig) -> Self {
        Self {
            learning_rate: p.learning_rate,
            batch_size: p.batch_size,
            clip: p.clip,
            vf_coef: p.vf_coef,
            entropy_coef: p.entropy_coef,
            total_timesteps: p.total_timesteps,
            max_grad_norm: p.max_grad_norm,
            reward_scaling: match p.reward_scaling {
                RewardScaling::Raw => RewardScalingTag::Raw,
                RewardScaling::PerPolicyholder => RewardScalingTag::PerPolicyholder,
            },
            shared: p.architecture.shared.clone(),
            policy: p.architecture.policy.clone(),
            value: p.architecture.value.clone(),
            head_gain: p.head_gain,
            initial_std: p.initial_std,
            advantage_norm: match p.advantage_norm {
                AdvantageNorm::Off => AdvantageNormTag::Off,
                AdvantageNorm::Scale => AdvantageNormTag::Scale,
                AdvantageNorm::Standardize => AdvantageNormTag::Standardize,
            },
            action_limit: p.action_limit,
        }
    }

    pub fn to_ppo(&self) -> Result<PpoConfig> {
        let cfg = PpoConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            clip: self.clip,
            vf_coef: self.vf_coef,
            entropy_coef: self.entropy_coef,
            total_timesteps: self.total_timesteps,
            max_grad_norm: self.max_grad_norm,
            reward_scaling: match self.reward_scaling {
                RewardScalingTag::Raw => RewardScaling::Raw,
                RewardScalingTag::PerPolicyholder => RewardScaling::PerPolicyholder,
            },
            architecture: Architecture {
                input: vahedge_core::env::OBS_DIM,
                shared: self.shared.clone(),
                policy: self.policy.clone(),
                value: self.value.clone(),
                activation: Activation::Relu,
            },
            head_gain: self.head_gain,
            initial_std: self.initial_std,
            advantage_norm: match self.advantage_norm {
                AdvantageNormTag::Off => AdvantageNorm::Off,
                AdvantageNormTag::Scale => AdvantageNorm::Scale,
                AdvantageNormTag::Standardize => AdvantageNorm::Standardize,
            },
            action_limit: self.action_limit,
        };
        cfg.validate().context("trainer section")?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub policyholders: u32,
    pub scenarios: u64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self { policyholders: 1, scenarios: 5000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HestonSection {
    pub v0: f64,
    pub kappa: f64,
    pub v_bar: f64,
    pub eta: f64,
    pub correlation: f64,
}

impl Default for HestonSection {
    fn default() -> Self {
        Self { v0: 0.04, kappa: 0.2, v_bar: 0.04, eta: 0.1, correlation: -0.5 }
    }
}

/// Model assumptions of the misspecified Delta hedgers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    /// Upper end of the uniform lifetime assumed by the IFM hedgers.
    pub ifm_upper: f64,
    pub heston: HestonSection,
    /// Simulated paths behind the Heston Delta table.
    pub heston_paths: usize,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self { ifm_upper: 50.0, heston: HestonSection::default(), heston_paths: 20_000 }
    }
}

/// Changes applied to the training setting to obtain the live market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineSection {
    pub mu: f64,
    pub sigma: f64,
    pub force: f64,
    pub shares: f64,
    pub policyholders: u32,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub updates: u64,
    pub eval_scenarios: u64,
}

impl Default for OnlineSection {
    fn default() -> Self {
        let o = OnlineConfig::default();
        Self {
            mu: -0.2,
            sigma: 0.4,
            force: 0.03,
            shares: 1.58,
            policyholders: 1,
            learning_rate: o.ppo.learning_rate,
            batch_size: o.ppo.batch_size,
            updates: o.updates,
            eval_scenarios: o.eval_scenarios,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivitySection {
    /// Entries of the form `mu=0.12`, `sigma=0.3` or `nu=0.01`.
    pub overrides: Vec<String>,
}

impl Default for SensitivitySection {
    fn default() -> Self {
        Self {
            overrides: Override::baseline_set()
                .iter()
                .map(|o| {
                    let (k, v) = o.label();
                    format!("{k}={v}")
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

pub fn parse_override(s: &str) -> Result<Override> {
    let (key, value) = s.split_once('=').ok_or_else(|| anyhow!("override `{s}` is not of the form key=value"))?;
    let v: f64 = value.trim().parse().with_context(|| format!("override `{s}` has a non-numeric value"))?;
    match key.trim() {
        "mu" => Ok(Override::Drift(v)),
        "sigma" => Ok(Override::Volatility(v)),
        "nu" | "lambda" => Ok(Override::MortalityForce(v)),
        other => bail!("unknown override key `{other}` (expected mu, sigma or nu)"),
    }
}

impl RunConfig {
    /// The baseline study: daily hedging of a one-year GMMB for 500
    /// policyholders aged 20 in a Black-Scholes market.
    pub fn baseline() -> Self {
        Self {
            seed: 1,
            market: MarketSection { r: 0.02, s0: 100.0, mu: 0.08, sigma: 0.2 },
            actuarial: ActuarialSection {
                mortality: MortalitySection::Constant { force: 0.02 },
                policyholders: 500,
                age: 20.0,
                maturity: 1.0,
                guarantee: 100.0,
                shares: 1.19,
                fee_rate: 0.02,
                rider_rate: None,
                hedges_per_year: 252,
            },
            trainer: TrainerSection::default(),
            evaluation: EvaluationSection::default(),
            benchmarks: BenchmarkSection::default(),
            online: OnlineSection::default(),
            sensitivity: SensitivitySection::default(),
            output: OutputSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| anyhow!("{}", e.to_string().replace('\n', " ").trim()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn key(&self) -> StreamKey {
        StreamKey::new(self.seed)
    }

    fn grid(&self) -> Result<PathGrid> {
        let a = &self.actuarial;
        let steps = (a.maturity * a.hedges_per_year as f64).round();
        if steps.is_nan() || steps < 1.0 {
            bail!("maturity and hedging frequency give no hedging dates");
        }
        Ok(PathGrid::new(steps as usize, a.maturity)?)
    }

    pub fn bs_market(&self) -> BsParams {
        let m = &self.market;
        BsParams { r: m.r, s0: m.s0, mu: m.mu, sigma: m.sigma }
    }

    pub fn mortality(&self) -> MortalityModel {
        self.actuarial.mortality.into()
    }

    /// Contract terms with the rider charge set; `rider_rate` absent means calibrated.
    pub fn terms(&self) -> Result<ContractTerms> {
        let a = &self.actuarial;
        let mut terms = ContractTerms {
            guarantee: a.guarantee,
            shares: a.shares,
            fee_rate: a.fee_rate,
            rider_rate: a.fee_rate,
            maturity: a.maturity,
            policyholders: a.policyholders,
            age: a.age,
        };
        terms.rider_rate = match a.rider_rate {
            Some(x) => x,
            None => self.calibrated_rider_rate()?,
        };
        terms.validate()?;
        Ok(terms)
    }

    pub fn calibrated_rider_rate(&self) -> Result<f64> {
        let a = &self.actuarial;
        let probe = ContractTerms {
            guarantee: a.guarantee,
            shares: a.shares,
            fee_rate: a.fee_rate,
            rider_rate: a.fee_rate,
            maturity: a.maturity,
            policyholders: a.policyholders,
            age: a.age,
        };
        Ok(calibrate_rider_charge(&probe, &self.bs_market(), &self.mortality())?)
    }

    pub fn train_env(&self) -> Result<EnvConfig> {
        let c = EnvConfig {
            market: self.bs_market(),
            mortality: self.mortality(),
            terms: self.terms()?,
            grid: self.grid()?,
            action_scale: ActionScale::PerInitialPolicyholder,
        };
        c.validate()?;
        Ok(c)
    }

    /// The training environment with the evaluation cohort size.
    pub fn eval_env(&self) -> Result<EnvConfig> {
        let mut c = self.train_env()?;
        c.terms.policyholders = self.evaluation.policyholders;
        c.validate()?;
        Ok(c)
    }

    /// The live market of the online study; the rider charge stays that of
    /// the training contract.
    pub fn online_env(&self) -> Result<EnvConfig> {
        let o = &self.online;
        let mut c = self.train_env()?;
        c.market.mu = o.mu;
        c.market.sigma = o.sigma;
        c.mortality = MortalityModel::Constant { force: o.force };
        c.terms.shares = o.shares;
        c.terms.policyholders = o.policyholders;
        c.validate()?;
        Ok(c)
    }

    pub fn ppo(&self) -> Result<PpoConfig> {
        self.trainer.to_ppo()
    }

    pub fn online_config(&self, learning: bool) -> Result<OnlineConfig> {
        let o = &self.online;
        let ppo = PpoConfig {
            learning_rate: o.learning_rate,
            batch_size: o.batch_size,
            total_timesteps: o.updates * o.batch_size as u64,
            ..self.ppo()?
        };
        ppo.validate().context("online section")?;
        Ok(OnlineConfig { ppo, updates: o.updates, eval_scenarios: o.eval_scenarios, learning })
    }

    pub fn overrides(&self) -> Result<Vec<Override>> {
        self.sensitivity.overrides.iter().map(|s| parse_override(s)).collect()
    }

    pub fn heston_params(&self) -> HestonParams {
        let h = &self.benchmarks.heston;
        HestonParams {
            r: self.market.r,
            s0: self.market.s0,
            mu: self.market.mu,
            v0: h.v0,
            kappa: h.kappa,
            v_bar: h.v_bar,
            eta: h.eta,
            correlation: h.correlation,
        }
    }

    pub fn heston_table(&self) -> Result<Arc<HestonDeltaTable>> {
        let key = self.key().child(7);
        Ok(Arc::new(HestonDeltaTable::build(
            &self.heston_params(),
            self.actuarial.fee_rate,
            &self.grid()?,
            self.benchmarks.heston_paths,
            key,
        )?))
    }

    /// A Delta hedger by its command-line tag, with the model assumptions of
    /// the training setting; `None` for the agent and the zero hedge.
    pub fn hedger(&self, kind: HedgerKind) -> Result<Option<DeltaHedger>> {
        Ok(self.hedgers(&[kind])?.pop().flatten())
    }

    /// Like [`RunConfig::hedger`] for several tags, building the Heston table at most once.
    pub fn hedgers(&self, kinds: &[HedgerKind]) -> Result<Vec<Option<DeltaHedger>>> {
        let (r, sigma) = (self.market.r, self.market.sigma);
        let upper = self.benchmarks.ifm_upper;
        let mut table: Option<Arc<HestonDeltaTable>> = None;
        let mut out = Vec::with_capacity(kinds.len());
        for &kind in kinds {
            let nu = || match self.actuarial.mortality {
                MortalitySection::Constant { force } => Ok(force),
                MortalitySection::Uniform { .. } => Err(anyhow!("the CFM hedgers need a constant force of mortality")),
            };
            let mut heston = || -> Result<Arc<HestonDeltaTable>> {
                if table.is_none() {
                    table = Some(self.heston_table()?);
                }
                Ok(table.clone().expect("table built"))
            };
            let h = match kind {
                HedgerKind::Rl | HedgerKind::Zero => None,
                HedgerKind::CfmBs => Some(DeltaHedger::CfmBs { r, sigma, nu: nu()? }),
                HedgerKind::IfmBs => Some(DeltaHedger::IfmBs { r, sigma, upper }),
                HedgerKind::CfmHeston => Some(DeltaHedger::CfmHeston { nu: nu()?, table: heston()? }),
                HedgerKind::IfmHeston => Some(DeltaHedger::IfmHeston { upper, table: heston()? }),
            };
            if let Some(h) = &h {
                h.validate()?;
            }
            out.push(h);
        }
        Ok(out)
    }
}

/// Hedger tags accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum HedgerKind {
    Rl,
    CfmBs,
    IfmBs,
    CfmHeston,
    IfmHeston,
    Zero,
}

impl HedgerKind {
    pub fn label(self) -> &'static str {
        match self {
            HedgerKind::Rl => "rl",
            HedgerKind::CfmBs => "cfm-bs",
            HedgerKind::IfmBs => "ifm-bs",
            HedgerKind::CfmHeston => "cfm-heston",
            HedgerKind::IfmHeston => "ifm-heston",
            HedgerKind::Zero => "zero",
        }
    }
}
