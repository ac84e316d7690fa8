//! Closed-form radial p-harmonic comparison functions on k-annuli.
//!
//! The primitive `xi(r, t) = integral from r to t of s^((1-k)/(p-1)) ds`
//! has the closed form `(t^(q+1) - r^(q+1)) / (q+1)` with
//! `q = (1-k)/(p-1)`, degenerating to `log(t/r)` at `q = -1` (that is,
//! at `p = k`). Both branches are evaluated through a single
//! `expm1`-based expression that is exact in the limit, so no threshold
//! switching is needed. The normalized profile `u0(t) = xi(r,t)/xi(r,R)`
//! runs from 0 at the inner sphere to 1 at the outer one, and
//! `u0(d_k(x))` solves the p-Laplace equation away from the axis.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::{Grid, GridField, NodeKind, VectorField, MAX_DIM};
use crate::parallel;
use crate::solver::{has_zero_gradient_cell, interior_residual_max};
use crate::{Error, Result, P_MAX};

/// `expm1(y)/y`, continuous through `y = 0`.
#[inline]
fn expm1_over(y: f64) -> f64 {
    if y == 0.0 {
        1.0
    } else {
        y.exp_m1() / y
    }
}

/// Antiderivative core valid for any `r, t > 0`; negative for `t < r`.
#[inline]
pub(crate) fn xi_continued(r: f64, t: f64, k: usize, p: f64) -> f64 {
    let s = (p - k as f64) / (p - 1.0); // q + 1
    let log_r = r.ln();
    let diff = t.ln() - log_r;
    (s * log_r).exp() * diff * expm1_over(s * diff)
}

/// `xi(r, t) = integral from r to t of s^((1-k)/(p-1)) ds`, strictly
/// increasing in `t`.
pub fn xi(r: f64, t: f64, k: usize, p: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::domain(format!("inner radius must be positive (got {r})")));
    }
    if !(t >= r) {
        return Err(Error::domain(format!("radius t={t} below inner radius r={r}")));
    }
    if !(p > 1.0) {
        return Err(Error::domain(format!("exponent p={p} must exceed 1")));
    }
    if k == 0 {
        return Err(Error::domain("symmetry index k must be at least 1".to_string()));
    }
    Ok(xi_continued(r, t, k, p))
}

/// Parameters of the normalized radial barrier `u0^{k,p}` on `[r, R]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    pub r: f64,
    /// Outer normalization radius `R`.
    pub big_r: f64,
    pub k: usize,
    pub n: usize,
    pub p: f64,
}

impl BarrierSpec {
    pub fn new(r: f64, big_r: f64, k: usize, n: usize, p: f64) -> Result<Self> {
        if !(r > 0.0 && big_r > r) {
            return Err(Error::config(format!("radii must satisfy 0 < r < R (got r={r}, R={big_r})")));
        }
        if n < 2 || n > MAX_DIM || k < 1 || k > n {
            return Err(Error::config(format!("indices must satisfy 1 <= k <= n <= {MAX_DIM} (got k={k}, n={n})")));
        }
        if !(p > 1.0 && p <= P_MAX) {
            return Err(Error::config(format!("exponent p={p} outside (1, {P_MAX}]")));
        }
        Ok(BarrierSpec { r, big_r, k, n, p })
    }

    fn denominator(&self) -> f64 {
        xi_continued(self.r, self.big_r, self.k, self.p)
    }

    /// Normalized barrier value; `t` must lie in `[r, R]`.
    pub fn u0(&self, t: f64) -> Result<f64> {
        if !(t >= self.r && t <= self.big_r) {
            return Err(Error::domain(format!(
                "t={t} outside [{}, {}]; use u0_extended for the continuation",
                self.r, self.big_r
            )));
        }
        Ok(self.u0_continued(t))
    }

    /// Monotone continuation beyond `R`, for experiments on annuli with
    /// a larger numerical outer radius. Requires `t >= r`.
    pub fn u0_extended(&self, t: f64) -> Result<f64> {
        if !(t >= self.r) {
            return Err(Error::domain(format!("t={t} below inner radius {}", self.r)));
        }
        Ok(self.u0_continued(t))
    }

    /// The same formula on all of `t > 0`; negative below `r`. This is
    /// what boundary layers straddling the inner sphere sample.
    pub fn u0_continued(&self, t: f64) -> f64 {
        xi_continued(self.r, t, self.k, self.p) / self.denominator()
    }

    /// Radial derivative `t^q / xi(r, R)` with `q = (1-k)/(p-1)`.
    pub fn u0_prime(&self, t: f64) -> f64 {
        let q = (1.0 - self.k as f64) / (self.p - 1.0);
        t.powf(q) / self.denominator()
    }

    /// Gradient of `u0(d_k(x))`: components vanish beyond axis `k`.
    pub fn gradient_at(&self, x: &[f64]) -> [f64; MAX_DIM] {
        let d = crate::geometry::d_k(x, self.k).unwrap_or(f64::NAN);
        let mut g = [0.0; MAX_DIM];
        if !(d > 0.0) {
            return g;
        }
        let scale = self.u0_prime(d) / d;
        for a in 0..self.k {
            g[a] = scale * x[a];
        }
        g
    }
}

/// Nodal barrier samples together with the analytic gradient field.
#[derive(Debug, Clone)]
pub struct BarrierFields {
    pub spec: BarrierSpec,
    pub field: GridField,
    pub gradient: VectorField,
}

/// Samples the barrier and its analytic gradient at every non-outside
/// node of `grid`. The boundary layer may extend slightly past `[r, R]`;
/// those nodes take the monotone continuation values.
pub fn barrier_field(spec: &BarrierSpec, grid: Arc<Grid>) -> Result<BarrierFields> {
    let gspec = &grid.spec;
    let n = gspec.n;
    if n != spec.n {
        return Err(Error::config(format!(
            "grid dimension {n} does not match barrier dimension {}",
            spec.n
        )));
    }
    // the formula is singular on the axis; any valued node must stay off it
    let h_min = (0..n).map(|a| gspec.spacing[a]).fold(f64::INFINITY, f64::min);
    let mut values = vec![0.0f64; gspec.node_count()];
    parallel::fill(&mut values, |idx| {
        if grid.mask[idx] == NodeKind::Outside {
            return 0.0;
        }
        let pos = gspec.position(idx);
        let d = crate::geometry::d_k(&pos[..n], spec.k).unwrap();
        spec.u0_continued(d.max(1e-3 * h_min))
    });
    for idx in 0..values.len() {
        if grid.mask[idx] != NodeKind::Outside && !values[idx].is_finite() {
            return Err(Error::domain(
                "barrier evaluation hit the symmetry axis; grid does not cover an annulus".to_string(),
            ));
        }
    }
    let mut components = Vec::with_capacity(n);
    for a in 0..n {
        let mut comp = vec![0.0f64; gspec.node_count()];
        parallel::fill(&mut comp, |idx| {
            if grid.mask[idx] == NodeKind::Outside {
                return 0.0;
            }
            let pos = gspec.position(idx);
            spec.gradient_at(&pos[..n])[a]
        });
        components.push(comp);
    }
    let field = GridField { grid: grid.clone(), values };
    let gradient = VectorField { grid, components };
    Ok(BarrierFields { spec: *spec, field, gradient })
}

/// Result of the discrete p-Laplacian residual check.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PlapResidual {
    /// Max-norm of the discrete p-Laplacian over interior nodes.
    pub value: f64,
    /// Regularization used: zero unless `p < 2` met a zero-gradient
    /// cell, in which case the solver's smallest epsilon is reported.
    pub eps: f64,
}

/// Max-norm of the discrete p-Laplacian of `field` over interior nodes,
/// with the same stencil the solver minimizes. Tends to zero under
/// refinement for exact solutions.
pub fn plap_residual(field: &GridField, p: f64) -> Result<PlapResidual> {
    if !(p > 1.0) {
        return Err(Error::domain(format!("exponent p={p} must exceed 1")));
    }
    let mut eps = 0.0;
    if p < 2.0 && has_zero_gradient_cell(field) {
        eps = 1e-8;
    }
    Ok(PlapResidual { value: interior_residual_max(field, p, eps), eps })
}
