//! Numerical laboratory for one-dimensional complex densities.
//!
//! A complex weight `ρ(z)` of rational type (the log-derivative `v = ρ'/ρ` is
//! rational in `z`, or in `ω = e^{iz}` on the cylinder) defines "expectation
//! values" `⟨f⟩ = ∫ ρ f dz` that cannot be importance-sampled directly. This
//! crate provides the pieces needed to study which linear functionals satisfy
//! the Schwinger-Dyson equations `(T, f' + vf) = 0` for such a density:
//!
//! * [`density`] — the factored density, its drift and its census of zeroes,
//!   poles and essential singularities, giving the path count `N_Γ`;
//! * [`contour`] — oriented paths between generalized zeroes, a spanning set
//!   construction and adaptive Gauss-Kronrod evaluation of `(T_γ, f)`;
//! * [`sde`] — the truncated moment recursion of the Schwinger-Dyson
//!   equations, its stabilized corank `N_SDE` and nullspace functionals;
//! * [`langevin`] — an ensemble complex Langevin simulation with reproducible
//!   per-walker noise streams;
//! * [`analysis`] — decomposition of Langevin results onto path functionals,
//!   stationary-flux diagnostics and the `⟨v⟩` check on the cylinder.

pub mod analysis;
pub mod cnum;
pub mod contour;
pub mod corpus;
pub mod density;
pub mod error;
pub mod langevin;
pub mod sde;

pub use contour::{Endpoint, Observable, PathKind, PathSpec, QuadratureConfig};
pub use density::{Density, DensitySpec, Mode, SingularityCensus};
pub use error::{Error, Result};
pub use langevin::{CLConfig, ExpectationRecord, Histogram, RunResult};
pub use sde::{MomentVector, SdeSystem};
