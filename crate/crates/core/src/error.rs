//! Crate-wide error type.

use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("evaluation point {z} is within the numeric guard of the singularity at {singularity}")]
    SingularityTooClose { z: Complex64, singularity: Complex64 },

    #[error("density magnitude overflows: log|rho| = {log_abs:.3}")]
    Overflow { log_abs: f64 },

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("invalid path '{label}': {reason}")]
    InvalidPath { label: String, reason: String },

    #[error("integrand on '{label}' does not decay below {tail_eps:e} within extent {extent}")]
    NoDecay { label: String, tail_eps: f64, extent: f64 },

    #[error("quadrature on '{label}' failed: estimated error {est_err:e} exceeds tolerance {tol:e}")]
    QuadratureFail { label: String, est_err: f64, tol: f64 },

    #[error("corank has not stabilized: coranks {coranks:?} across tested windows")]
    NotStabilized { coranks: Vec<usize> },

    #[error("walker {walker} ran away at t = {t:.4}: z = {z}")]
    Runaway { walker: usize, t: f64, z: Complex64 },

    #[error("walker {walker} hit a singular region at t = {t:.4}: z = {z}")]
    SingularHit { walker: usize, t: f64, z: Complex64 },

    #[error("basis functionals are numerically rank deficient (sigma_min/sigma_max = {ratio:e})")]
    RankDeficientBasis { ratio: f64 },

    #[error("curve passes within {dist:.4} of the singularity at {singularity} (minimum {min_dist:.4})")]
    CurveTooClose { singularity: Complex64, dist: f64, min_dist: f64 },

    #[error("{0}")]
    Unsupported(String),
}
