use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("shape mismatch in {op}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("tangent vector is anchored at a different point")]
    AnchorMismatch,

    #[error("matrix is not on the Stiefel manifold (orthonormality residual {residual:e})")]
    NotOrthonormal { residual: f64 },

    #[error("retraction system is singular (condition estimate {condition:e})")]
    RetractionSingular { condition: f64 },

    #[error("section is degenerate for seed {seed}; retry with a different seed")]
    SectionDegenerate { seed: u64 },

    #[error("division by a vanishing norm in {0}")]
    DivisionDegenerate(&'static str),

    #[error("integration failed at step {step}: Newton did not converge in {iterations} iterations (last update norm {last_update:e})")]
    IntegrationFailure {
        step: usize,
        iterations: usize,
        last_update: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("tape does not belong to the current parameters")]
    StaleTape,

    #[error("data set is empty")]
    EmptyData,

    #[error("snapshot set is already normalized")]
    AlreadyNormalized,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_shape(
    op: &'static str,
    expected: (usize, usize),
    found: (usize, usize),
) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            op,
            expected,
            found,
        })
    }
}
