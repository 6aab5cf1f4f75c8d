//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures raised by model construction, solvers, and verification oracles.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Arguments with inconsistent dimensions or out-of-range indices.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A solver hypothesis (definiteness, player count, cost shape) does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A linear system that must have a unique solution is singular.
    #[error("singular system in {system}{}: pivot ratio {condition:.3e}", stage_suffix(*.stage))]
    Singular {
        /// Name of the equation family whose left-hand operator failed.
        system: String,
        /// Decision stage at which the failure occurred, when known.
        stage: Option<usize>,
        /// Ratio of smallest to largest pivot magnitude (0 for exact singularity).
        condition: f64,
    },
}

fn stage_suffix(stage: Option<usize>) -> String {
    match stage {
        Some(t) => format!(" at stage {t}"),
        None => String::new(),
    }
}

impl Error {
    /// Attaches a stage index to a singular-system error; other variants pass through.
    pub fn at_stage(self, t: usize) -> Self {
        match self {
            Error::Singular {
                system, condition, ..
            } => Error::Singular {
                system,
                stage: Some(t),
                condition,
            },
            other => other,
        }
    }

    /// True for failures of a solver's linear systems, as opposed to bad input.
    pub fn is_singular(&self) -> bool {
        matches!(self, Error::Singular { .. })
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
