use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} = {value} is outside its domain ({expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("relay list lengths disagree: {sr} source-relay vs {rd} relay-destination variances")]
    RelayCountMismatch { sr: usize, rd: usize },

    #[error("relay index {index} does not exist in a network with {num_relays} relays")]
    RelayIndex { index: usize, num_relays: usize },

    #[error("a phase tree needs at least one relay")]
    NoRelays,

    #[error("{requested} relays exceeds the supported maximum of {max}")]
    TooManyRelays { requested: usize, max: usize },

    #[error("decode profile has {got} levels but {needed} are required")]
    ShortProfile { needed: usize, got: usize },

    #[error("phase tree leaf probabilities sum to {total}, not 1")]
    InconsistentTree { total: f64 },

    #[error("matrix shapes {left:?} and {right:?} are incompatible")]
    Shape {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("trial count must be at least 1")]
    NoTrials,

    #[error("outage target epsilon = {epsilon} is degenerate; it must lie strictly inside (0, 1)")]
    DegenerateTarget { epsilon: f64 },

    #[error("capacity expressions are defined for a single relay, got {num_relays}")]
    UnsupportedTopology { num_relays: usize },

    #[error(
        "solver stopped after {iterations} iterations at rate {last_rate} with residual {residual}"
    )]
    NoConvergence {
        last_rate: f64,
        iterations: usize,
        residual: f64,
    },
}

/// Checks that `value` is a probability.
pub(crate) fn probability(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::Domain {
            name,
            value,
            expected: "[0, 1]",
        })
    }
}

pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain {
            name,
            value,
            expected: "finite and > 0",
        })
    }
}
