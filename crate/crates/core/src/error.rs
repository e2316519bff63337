use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {0:?} lies outside the system domain")]
    Domain(Vec<f64>),

    #[error("invalid system parameters: {0}")]
    InvalidSystem(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A hypothesis of the contraction theorem does not hold for the inputs.
    #[error("hypothesis violation: {0}")]
    Hypothesis(String),

    #[error("rate sequence is not certified submultiplicative")]
    Uncertified,

    #[error("rate table covers indices up to {available}, but {requested} were requested")]
    RateHorizon { requested: usize, available: usize },

    #[error("no valid n0 within horizon {horizon}")]
    DerivationFailure { horizon: usize },

    #[error("estimated tree size {estimate} exceeds node cap {cap}")]
    TreeTooLarge { estimate: u128, cap: usize },

    #[error("node cap {cap} exceeded while building level {failed_level}; levels up to {completed_level} are complete")]
    TreeTruncated {
        completed_level: usize,
        failed_level: usize,
        cap: usize,
    },

    #[error("chain gluing hit a censored first-entry value at orbit offset {offset}")]
    CensoredGlue { offset: usize },
}
