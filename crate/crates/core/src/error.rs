use thiserror::Error;

/// Errors produced by the accountant and its numerical building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("length {0} is not a power of two >= 2")]
    Length(usize),

    #[error("root not bracketed: f({a}) = {fa}, f({b}) = {fb}")]
    Bracket { a: f64, b: f64, fa: f64, fb: f64 },

    #[error("quadrature did not converge after {evaluations} evaluations (value {value}, error estimate {error})")]
    Quadrature { value: f64, error: f64, evaluations: usize },

    #[error("invalid mechanism: {0}")]
    InvalidMechanism(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("monotone piece detection failed with a {grid}-point grid; retry with at least {suggested} points")]
    PieceDetection { grid: usize, suggested: usize },

    #[error("inverse FFT produced negative mass {mass:e} at bin {index}; enlarge the outer window")]
    NegativeMass { index: usize, mass: f64 },

    #[error("infeasible budget: grid size {grid_size} exceeds the cap {cap}; minimal feasible eta_main is about {min_eta_main:e}")]
    InfeasibleBudget {
        grid_size: u64,
        cap: u64,
        min_eta_main: f64,
    },

    #[error("optimizer did not converge (best value {best}, at {at:?}); widen the search bracket to {suggestion:?}")]
    Optimizer {
        best: f64,
        at: Vec<f64>,
        suggestion: (f64, f64),
    },

    #[error("size error: {0}")]
    Size(String),
}

pub type Result<T> = std::result::Result<T, Error>;
