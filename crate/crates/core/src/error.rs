use thiserror::Error;

/// Library-wide error type.
///
/// The variants map onto the CLI exit codes: `Domain`/`Input` are caller
/// mistakes, `Solver` means an inner minimization gave up, `Invariant` means
/// a runtime consistency check failed.
#[derive(Debug, Error)]
pub enum FlowError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("solver error at node {node}: {message} (residual {residual:.3e} after {iterations} iterations)")]
    Solver {
        node: usize,
        message: String,
        residual: f64,
        iterations: usize,
    },
    #[error("invariant violation: {0}")]
    Invariant(String),
}

/// Failure of an inner proximal solve, carrying the best iterate reached.
#[derive(Debug, Clone)]
pub struct ProxFailure<S> {
    pub best: S,
    pub residual: f64,
    pub iterations: usize,
}

impl<S> ProxFailure<S> {
    pub fn into_flow_error(self, node: usize) -> FlowError {
        FlowError::Solver {
            node,
            message: "inner proximal solver exceeded its iteration cap".into(),
            residual: self.residual,
            iterations: self.iterations,
        }
    }
}

pub type Result<T> = std::result::Result<T, FlowError>;
