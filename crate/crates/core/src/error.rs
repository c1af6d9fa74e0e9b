use core::fmt;

use crate::prelude::*;

pub type Result<T> = core::result::Result<T, Error>;

/// Every failure the numerical core can report.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    ZeroVector,
    NonSmoothOrigin,
    ZeroFiberVector,
    InfeasibleParams { inequality: String },
    NewtonDivergence { detail: String },
    NotPeriodic,
    UnsupportedMonodromy,
    GramSolveFailure,
    CholeskyFailure { pivot: usize },
    MaxItersExceeded { iters: usize, grad_norm: f64 },
    DegenerateShrink { min_speed: f64 },
    MassMatrixSingular,
    TangentNotNull { rayleigh: f64, thresh: f64 },
    OrbitBoundViolated { m_zero_orbit: usize, bound: usize },
    Precondition(String),
    Dimension(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ZeroVector => write!(f, "cannot retract the zero vector onto the sphere"),
            Error::NonSmoothOrigin => {
                write!(f, "fiber derivative requested at v = 0 for a non-quadratic Lagrangian")
            }
            Error::ZeroFiberVector => write!(f, "fundamental tensor is undefined at v = 0"),
            Error::InfeasibleParams { inequality } => {
                write!(f, "cutoff parameters infeasible: {inequality}")
            }
            Error::NewtonDivergence { detail } => write!(f, "Newton iteration diverged: {detail}"),
            Error::NotPeriodic => write!(f, "operation requires a periodic curve"),
            Error::UnsupportedMonodromy => {
                write!(f, "only diagonal +-1 monodromy on flat manifolds is supported")
            }
            Error::GramSolveFailure => write!(f, "Sobolev Gram matrix is not positive definite"),
            Error::CholeskyFailure { pivot } => {
                write!(f, "Cholesky factorization failed at pivot {pivot}")
            }
            Error::MaxItersExceeded { iters, grad_norm } => write!(
                f,
                "no convergence after {iters} iterations (gradient norm {grad_norm:.3e})"
            ),
            Error::DegenerateShrink { min_speed } => {
                write!(f, "curve collapsed toward a point (min speed {min_speed:.3e})")
            }
            Error::MassMatrixSingular => write!(
                f,
                "fiber Hessian singular along the trajectory; retry with tau = 1"
            ),
            Error::TangentNotNull { rayleigh, thresh } => write!(
                f,
                "tangent field is not numerically null (Rayleigh quotient {rayleigh:.3e} > {thresh:.3e})"
            ),
            Error::OrbitBoundViolated { m_zero_orbit, bound } => {
                write!(f, "orbit nullity {m_zero_orbit} exceeds the bound {bound}")
            }
            Error::Precondition(msg) => write!(f, "precondition failed: {msg}"),
            Error::Dimension(msg) => write!(f, "dimension mismatch: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
