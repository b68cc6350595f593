use thiserror::Error;

use crate::composite::DimMismatch;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid composite spec: {}", format_mismatches(.0))]
    InvalidSpec(Vec<DimMismatch>),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value at layer {layer}{}", .index.map(|i| format!(", observation {i}")).unwrap_or_default())]
    NonFinite { layer: usize, index: Option<usize> },

    #[error("layer {0} has no declared Jacobian")]
    MissingJacobian(usize),

    #[error("need at least {required} observations, got {n}")]
    InsufficientSample { n: usize, required: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bandwidth is zero; fall back to empirical estimation")]
    DegenerateBandwidth,

    #[error("convolution needs at least 3 quadrature nodes, got {0}")]
    TooFewNodes(usize),

    #[error("covariance is not positive semidefinite (min eigenvalue {min_eigenvalue:e}, trace {trace:e})")]
    NotPsd { min_eigenvalue: f64, trace: f64 },

    #[error("gradient is singular: tail mean is zero")]
    DegenerateTail,

    #[error("objective is not finite at u = {0}")]
    NonFiniteObjective(f64),

    #[error("distribution is degenerate: {0}")]
    Degenerate(String),

    #[error("replication {index}: {source}")]
    Replication {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for errors caused by inputs or configuration rather than by numerics.
    pub fn is_config(&self) -> bool {
        match self {
            Error::InvalidSpec(_) | Error::Dimension(_) | Error::InvalidParameter(_) => true,
            Error::Replication { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

fn format_mismatches(list: &[DimMismatch]) -> String {
    list.iter()
        .map(|m| m.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
