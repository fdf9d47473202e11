use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("truncation M={truncation} leaves Poisson tail mass {tail:.3e} > {limit:.0e}; increase M")]
    TruncationTooShort { truncation: usize, tail: f64, limit: f64 },

    #[error("fixed-point map denominator underflowed at alpha={alpha}")]
    DenominatorUnderflow { alpha: f64 },

    #[error("degenerate SNR: output power {output_power} does not exceed useful power {useful_power}")]
    DegenerateSnr { output_power: f64, useful_power: f64 },

    #[error("need at least 2 samples for Monte Carlo evaluation, got {0}")]
    TooFewSamples(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
