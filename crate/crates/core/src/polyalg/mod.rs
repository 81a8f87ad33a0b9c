//! Multivariate polynomials, parametric polynomials, Lie derivatives and
//! trajectory sampling.

mod monomial;
mod param;
mod parse;
mod polynomial;
mod system;

pub use monomial::{homogeneous_monomials, monomial_basis, Monomial};
pub use param::ParamPolynomial;
pub use parse::parse_polynomial;
pub use polynomial::Polynomial;
pub use system::{
    lie_derivative, lie_derivative_once, lie_derivatives_param, sample_trajectory, DynamicalSystem, Trajectory,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolyError {
    #[error("unknown variable '{name}' at offset {position}")]
    UnknownVariable { name: String, position: usize },
    #[error("malformed exponent at offset {position}")]
    MalformedExponent { position: usize },
    #[error("zero denominator at offset {position}")]
    ZeroDenominator { position: usize },
    #[error("syntax error at offset {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("state became non-finite at step {step}")]
    NonFiniteState { step: usize },
}

/// Convenience for building variable lists `x1..xn`.
pub fn default_variables(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}
