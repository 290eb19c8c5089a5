//! Small dense conic solver: LP, SOCP and SDP with Hermitian PSD variables.
//!
//! The modeling layer ([`ConicProblem`]) takes Hermitian blocks, free reals and
//! linear / second-order-cone constraints; the engine ([`ipm`]) is a
//! homogeneous self-dual interior-point method over real symmetric cones.

pub mod cone;
pub mod dump;
pub mod ipm;
pub mod problem;
pub mod svec;

pub use dump::dump_text;
pub use ipm::{IpmOptions, IpmStatus, StandardForm};
pub use problem::{
    lower_quadratic_to_soc, realify_factor, realify_quadratic, CMatrix, ConicBackend, ConicProblem, ConicSolution,
    Constraint, FreeVar, InteriorPoint, KktResiduals, LinExpr, Lowered, PsdVar, QuadraticSoc, Route,
    Sense, SolveOptions, SolveStatus, VarKey,
};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Gram matrix is indefinite (min eigenvalue {min_eigenvalue:e}, trace {trace:e})")]
    IndefiniteGram { min_eigenvalue: f64, trace: f64 },
}
