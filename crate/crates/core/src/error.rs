use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),

    #[error("time {t} lies outside [0, {maturity}]")]
    TimeOutOfRange { t: f64, maturity: f64 },

    #[error("maturity {maturity} must precede the lifetime upper bound {upper}")]
    MaturityBeyondLifetime { maturity: f64, upper: f64 },

    #[error("guarantee too expensive: net liability at m_e = m is {net_at_max} > 0")]
    GuaranteeTooExpensive { net_at_max: f64 },

    #[error("non-finite network input at feature {0}")]
    NonFiniteInput(usize),

    #[error("episode already terminated")]
    EpisodeTerminated,

    #[error("non-finite gradient; update aborted")]
    NonFiniteGradient,

    #[error("weight file: {0}")]
    Format(&'static str),

    #[error("weight file version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("network dimension mismatch: {0}")]
    Dimension(&'static str),

    #[error("unsupported configuration: {0}")]
    Unsupported(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
