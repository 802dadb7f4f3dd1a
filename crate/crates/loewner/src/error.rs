use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("pole of the gamma function at {0}")]
    Pole(f64),
    #[error("hypergeometric series diverges: {0}")]
    Divergence(String),
    #[error("series did not converge after {0} terms")]
    NonConvergence(usize),
    #[error("trajectory hit the driving point (|f - lambda| = {0:e})")]
    BlowUp(f64),
    #[error("quality check failed: {0}")]
    Quality(String),
    #[error("quadrature failure: {0}")]
    Quadrature(String),
    #[error("evaluation point violates margin: {0}")]
    Margin(String),
    #[error("singular recursion matrix at k = {k}: {collision}")]
    Singular { k: usize, collision: String },
    #[error("root not bracketed: {0}")]
    Bracket(String),
}

pub type Result<T> = std::result::Result<T, Error>;
