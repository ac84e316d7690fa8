//! Numerical toolkit for three-spheres bounds on p-harmonic functions.
//!
//! The library is organised around the objects the bounds are stated in:
//!
//! * [`geometry`] — k-annuli `{alpha < d_k(x) < beta}`, the anisotropic
//!   distance `d_k`, uniform tensor grids and quadrature on k-spheres;
//! * [`barrier`] — the explicit radial p-harmonic comparison function,
//!   its gradient and a discrete residual check;
//! * [`inequality`] — the elementary difference-quotient inequalities
//!   with tight constants and the envelope for the line integral `I(p)`;
//! * [`solver`] — a variational p-Laplace Dirichlet solver on truncated
//!   annuli plus the closed-form radial oracle;
//! * [`verify`] — sphere maxima, the three-spheres bound check, growth
//!   weights `H(t)`, divergence diagnostics, the extremal cutoff, and
//!   the classical three-circles inequality for analytic functions;
//! * [`io`] — the flat binary field format with a JSON sidecar.
//!
//! Hot loops are data-parallel over grid cells and nodes. With the
//! default `parallel` feature they run on rayon; without it the same
//! fixed-chunk reductions run sequentially, so results are bitwise
//! identical in both modes and for any thread count.

pub mod barrier;
mod error;
pub mod geometry;
pub mod hadamard;
pub mod inequality;
pub mod io;
pub mod parallel;
pub mod solver;
pub mod verify;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Upper guardrail on the exponent `p`; extreme exponents make the
/// discrete energy too ill-conditioned for desk-scale verification.
pub const P_MAX: f64 = 10.0;
