use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("rejection sampling gave up after {attempts} attempts")]
    DegenerateTruncation { attempts: u64 },

    #[error("no feasible input on the input grid")]
    InfeasibleInput,

    #[error("value {value} left [0, 1] at stage {stage}, node {node}")]
    ValueOutOfRange { stage: usize, node: usize, value: f64 },

    #[error("instance too large for the enumeration oracle: {0}")]
    TooLarge(String),

    #[error("transport problem is infeasible: {0}")]
    Infeasible(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("argument error: {0}")]
    Argument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize, context: &'static str) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            expected,
            got,
            context,
        })
    }
}
