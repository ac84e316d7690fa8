//! Variational p-Laplace Dirichlet solver on truncated k-annuli.
//!
//! The discrete energy is `sum over active cells of
//! (|grad u|_cell^2 + eps^2)^(p/2) * cell_volume`, where the cell
//! gradient averages the one-sided differences over the cell's edges
//! (cell-centered stencil, midpoint quadrature). The energy is convex
//! for `p > 1` and smooth for `eps > 0`; the degenerate limit is
//! recovered by continuation over a decreasing epsilon schedule, each
//! stage warm-started from the previous one.
//!
//! The minimizer is preconditioned nonlinear conjugate gradient with
//! Armijo backtracking (restarted whenever the direction is not a
//! descent direction), a diagonal preconditioner built from the
//! energy's second differences, and a two-signal stop: relative
//! projected-gradient norm plus an energy-stagnation trigger.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::barrier::BarrierSpec;
use crate::geometry::{build_grid, Grid, GridField, KAnnulus, NodeKind, MAX_DIM};
use crate::parallel;
use crate::{Error, Result, P_MAX};

/// Fractional power with fast paths for the exponents the solver hits
/// in every cell.
#[inline]
pub(crate) fn powq(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if e == 0.5 {
        x.sqrt()
    } else if e == 1.0 {
        x
    } else if e == -0.5 {
        x.sqrt().recip()
    } else {
        x.powf(e)
    }
}

/// Geometry constants for the cell-centered gradient stencil.
pub(crate) struct Stencil {
    n: usize,
    corners: usize,
    node_strides: [usize; MAX_DIM],
    cell_strides: [usize; MAX_DIM],
    dims: [usize; MAX_DIM],
    corner_offsets: [usize; 16],
    /// `1 / (2^(n-1) * h_a)`: weight of one corner in the a-gradient.
    inv_den: [f64; MAX_DIM],
    volume: f64,
}

impl Stencil {
    pub(crate) fn new(grid: &Grid) -> Self {
        let spec = &grid.spec;
        let n = spec.n;
        let node_strides = spec.node_strides();
        let cell_strides = spec.cell_strides();
        let corners = 1usize << n;
        let mut corner_offsets = [0usize; 16];
        for (m, off) in corner_offsets.iter_mut().enumerate().take(corners) {
            let mut o = 0;
            for a in 0..n {
                if (m >> a) & 1 == 1 {
                    o += node_strides[a];
                }
            }
            *off = o;
        }
        let mut inv_den = [0.0; MAX_DIM];
        let edges_per_axis = (corners >> 1) as f64;
        for a in 0..n {
            inv_den[a] = 1.0 / (edges_per_axis * spec.spacing[a]);
        }
        Stencil {
            n,
            corners,
            node_strides,
            cell_strides,
            dims: spec.dims,
            corner_offsets,
            inv_den,
            volume: spec.cell_volume(),
        }
    }

    /// Node index of a cell's low corner.
    #[inline]
    fn cell_base(&self, cell: usize) -> usize {
        let mut rem = cell;
        let mut base = 0;
        for a in 0..self.n {
            let c = rem / self.cell_strides[a];
            rem %= self.cell_strides[a];
            base += c * self.node_strides[a];
        }
        base
    }

    /// Cell-centered gradient from the corner values.
    #[inline]
    fn gradient(&self, values: &[f64], base: usize) -> ([f64; MAX_DIM], f64) {
        let mut g = [0.0f64; MAX_DIM];
        for m in 0..self.corners {
            let v = values[base + self.corner_offsets[m]];
            for a in 0..self.n {
                if (m >> a) & 1 == 1 {
                    g[a] += v;
                } else {
                    g[a] -= v;
                }
            }
        }
        let mut g2 = 0.0;
        for a in 0..self.n {
            g[a] *= self.inv_den[a];
            g2 += g[a] * g[a];
        }
        (g, g2)
    }

    /// Derivative of the cell energy with respect to the value at the
    /// corner encoded by bitmask `m`, divided by `p`:
    /// `volume * (g^2+eps^2)^((p-2)/2) * <g, dg/du>`.
    #[inline]
    fn corner_euler(&self, values: &[f64], base: usize, m: usize, p: f64, eps: f64) -> f64 {
        let (g, g2) = self.gradient(values, base);
        let s = g2 + eps * eps;
        if s == 0.0 {
            // limit of |g|^(p-2) g as g -> 0 for p > 1
            return 0.0;
        }
        let coef = powq(s, (p - 2.0) / 2.0);
        let mut dir = 0.0;
        for a in 0..self.n {
            let sign = if (m >> a) & 1 == 1 { self.inv_den[a] } else { -self.inv_den[a] };
            dir += g[a] * sign;
        }
        self.volume * coef * dir
    }

    /// Sum of `corner_euler` over the active cells adjacent to node
    /// `idx`; equals `(dE/du_idx) / p`.
    fn node_euler(&self, grid: &Grid, values: &[f64], idx: usize, p: f64, eps: f64) -> f64 {
        let mi = grid.spec.multi_index(idx);
        let mut acc = 0.0;
        'corner: for m in 0..self.corners {
            let mut cell = 0usize;
            for a in 0..self.n {
                let bit = (m >> a) & 1;
                let c = mi[a] as isize - bit as isize;
                if c < 0 || c as usize > self.dims[a] - 2 {
                    continue 'corner;
                }
                cell += c as usize * self.cell_strides[a];
            }
            if !grid.cell_active[cell] {
                continue;
            }
            let base = idx - self.corner_offsets[m];
            acc += self.corner_euler(values, base, m, p, eps);
        }
        acc
    }
}

/// Regularized p-Dirichlet energy of a field.
pub fn discrete_energy(field: &GridField, p: f64, eps: f64) -> f64 {
    let grid = &field.grid;
    let st = Stencil::new(grid);
    let values = &field.values;
    let cells = &grid.active_cells;
    let e = p / 2.0;
    parallel::indexed_sum(cells.len(), |j| {
        let base = st.cell_base(cells[j]);
        let (_, g2) = st.gradient(values, base);
        powq(g2 + eps * eps, e) * st.volume
    })
}

/// Gradient of [`discrete_energy`] with respect to the interior node
/// values, in the order of `grid.interior`.
pub fn energy_gradient(field: &GridField, p: f64, eps: f64) -> Vec<f64> {
    let grid = &field.grid;
    let st = Stencil::new(grid);
    let mut out = vec![0.0; grid.interior.len()];
    gradient_into(&st, grid, &field.values, p, eps, &mut out);
    out
}

fn gradient_into(st: &Stencil, grid: &Grid, values: &[f64], p: f64, eps: f64, out: &mut [f64]) {
    let interior = &grid.interior;
    parallel::fill(out, |j| p * st.node_euler(grid, values, interior[j], p, eps));
}

/// Max-norm over interior nodes of the discrete p-Laplacian,
/// `|dE/du| / (p * cell_volume)`; the node-volume scaling makes it a
/// consistent approximation of `-div(|grad u|^(p-2) grad u)`.
pub fn interior_residual_max(field: &GridField, p: f64, eps: f64) -> f64 {
    let grid = &field.grid;
    let st = Stencil::new(grid);
    let values = &field.values;
    let interior = &grid.interior;
    let scale = 1.0 / st.volume;
    parallel::indexed_max(interior.len(), |j| {
        (st.node_euler(grid, values, interior[j], p, eps) * scale).abs()
    })
}

/// True when some active cell has an exactly zero gradient (the
/// singular set of the integrand for `p < 2`).
pub(crate) fn has_zero_gradient_cell(field: &GridField) -> bool {
    let grid = &field.grid;
    let st = Stencil::new(grid);
    let cells = &grid.active_cells;
    // max of indicator; deterministic either way
    parallel::indexed_max(cells.len(), |j| {
        let base = st.cell_base(cells[j]);
        let (_, g2) = st.gradient(&field.values, base);
        if g2 == 0.0 {
            1.0
        } else {
            0.0
        }
    }) > 0.5
}

/// Dirichlet data on the boundary layer.
#[derive(Clone)]
pub enum BoundaryData {
    /// The radial comparison profile evaluated at `d_k(x)` (continued
    /// monotonically outside `[r, R]`).
    Barrier(BarrierSpec),
    /// Constant data.
    Constant(f64),
    /// Barrier data with a nonnegative angular bump subtracted on the
    /// outer layer: stays at or below the barrier everywhere.
    PerturbedBarrier { spec: BarrierSpec, amplitude: f64, mode: u32 },
    /// Arbitrary data from node position.
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryData::Barrier(s) => write!(f, "Barrier({s:?})"),
            BoundaryData::Constant(c) => write!(f, "Constant({c})"),
            BoundaryData::PerturbedBarrier { spec, amplitude, mode } => {
                write!(f, "PerturbedBarrier({spec:?}, amplitude={amplitude}, mode={mode})")
            }
            BoundaryData::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl BoundaryData {
    pub fn evaluate(&self, pos: &[f64]) -> f64 {
        match self {
            BoundaryData::Constant(c) => *c,
            BoundaryData::Barrier(spec) => {
                let d = crate::geometry::d_k(pos, spec.k).unwrap_or(0.0);
                spec.u0_continued(d)
            }
            BoundaryData::PerturbedBarrier { spec, amplitude, mode } => {
                let d = crate::geometry::d_k(pos, spec.k).unwrap_or(0.0);
                let base = spec.u0_continued(d);
                if d >= 0.5 * (spec.r + spec.big_r) {
                    let theta = if spec.k >= 2 { pos[1].atan2(pos[0]) } else { 0.0 };
                    base - amplitude * 0.5 * (1.0 + (*mode as f64 * theta).cos())
                } else {
                    base
                }
            }
            BoundaryData::Custom(f) => f(pos),
        }
    }
}

/// A Dirichlet problem for the p-Laplace equation on a truncated
/// k-annulus.
#[derive(Debug, Clone)]
pub struct PLaplaceProblem {
    pub annulus: KAnnulus,
    pub p: f64,
    pub boundary: BoundaryData,
    pub cells_per_axis: usize,
    /// Decreasing regularization values for the continuation.
    pub epsilon_schedule: Vec<f64>,
    /// Relative projected-gradient stopping threshold.
    pub tolerance: f64,
    /// Total iteration budget across all continuation stages.
    pub max_iterations: usize,
}

impl PLaplaceProblem {
    pub fn new(annulus: KAnnulus, p: f64, boundary: BoundaryData, cells_per_axis: usize) -> Self {
        PLaplaceProblem {
            annulus,
            p,
            boundary,
            cells_per_axis,
            epsilon_schedule: vec![1e-2, 1e-4, 1e-8],
            tolerance: 1e-10,
            max_iterations: 10_000,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p <= P_MAX) {
            return Err(Error::config(format!("exponent p={} outside (1, {P_MAX}]", self.p)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::config("tolerance must be positive".to_string()));
        }
        if self.epsilon_schedule.is_empty() {
            return Err(Error::config("epsilon schedule must be nonempty".to_string()));
        }
        let mut prev = f64::INFINITY;
        for &e in &self.epsilon_schedule {
            if !(e > 0.0 && e < prev) {
                return Err(Error::config(
                    "epsilon schedule must be positive and strictly decreasing".to_string(),
                ));
            }
            prev = e;
        }
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations must be positive".to_string()));
        }
        Ok(())
    }
}

/// Outcome summary of one solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub final_energy: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Gradient max-norm at the initial iterate; the stopping reference.
    pub grad_reference: f64,
    pub weak_residual: f64,
    pub converged: bool,
    pub stage_iterations: Vec<usize>,
    /// Energies of accepted iterates, for monotonicity checks.
    #[serde(skip)]
    pub energy_trace: Vec<f64>,
}

/// Field plus report; carried inside non-convergence errors so callers
/// always see the best iterate.
pub struct SolveOutput {
    pub field: GridField,
    pub report: SolveReport,
}

impl fmt::Debug for SolveOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SolveOutput")
            .field("nodes", &self.field.values.len())
            .field("report", &self.report)
            .finish()
    }
}

/// Minimizes the discrete p-Dirichlet energy subject to the problem's
/// Dirichlet data. Boundary nodes are fixed exactly; the energy of the
/// accepted iterates never increases.
pub fn solve_dirichlet(problem: &PLaplaceProblem) -> Result<(GridField, SolveReport)> {
    problem.validate()?;
    let grid = build_grid(&problem.annulus, problem.cells_per_axis)?;
    solve_on_grid(problem, grid)
}

/// As [`solve_dirichlet`] but on a caller-provided grid (shared across
/// several solves of the same discretization).
pub fn solve_on_grid(problem: &PLaplaceProblem, grid: Arc<Grid>) -> Result<(GridField, SolveReport)> {
    problem.validate()?;
    let spec = grid.spec.clone();
    let n = spec.n;

    let mut values = vec![0.0f64; spec.node_count()];
    let mut boundary_sum = 0.0;
    let mut boundary_count = 0usize;
    for idx in 0..values.len() {
        if grid.mask[idx] == NodeKind::Boundary {
            let pos = spec.position(idx);
            let v = problem.boundary.evaluate(&pos[..n]);
            if !v.is_finite() {
                return Err(Error::domain(format!("boundary data not finite at {:?}", &pos[..n])));
            }
            values[idx] = v;
            boundary_sum += v;
            boundary_count += 1;
        }
    }
    if boundary_count == 0 {
        return Err(Error::config("grid has no boundary layer".to_string()));
    }
    let guess = boundary_sum / boundary_count as f64;
    for &idx in &grid.interior {
        values[idx] = guess;
    }

    let field = GridField { grid: grid.clone(), values };
    minimize(problem, field)
}

fn max_abs(xs: &[f64]) -> f64 {
    parallel::indexed_max(xs.len(), |i| xs[i].abs()).max(0.0)
}

fn minimize(problem: &PLaplaceProblem, mut field: GridField) -> Result<(GridField, SolveReport)> {
    const ARMIJO_C1: f64 = 1e-4;
    const SHRINK: f64 = 0.5;
    const MAX_BACKTRACKS: usize = 60;
    const PRECOND_REFRESH: usize = 50;
    const STAGNATION_REL: f64 = 1e-14;

    let grid = field.grid.clone();
    let st = Stencil::new(&grid);
    let interior = &grid.interior;
    let m = interior.len();
    let p = problem.p;

    let mut grad = vec![0.0f64; m];
    let mut grad_next = vec![0.0f64; m];
    let mut precond = vec![0.0f64; m];
    let mut dir = vec![0.0f64; m];
    let mut precond_grad = vec![0.0f64; m];
    let mut precond_grad_next = vec![0.0f64; m];
    let mut trial = field.values.clone();

    let eps0 = problem.epsilon_schedule[0];
    gradient_into(&st, &grid, &field.values, p, eps0, &mut grad);
    let grad_reference = max_abs(&grad).max(f64::MIN_POSITIVE);
    let target = problem.tolerance * grad_reference;

    let mut iterations = 0usize;
    let mut stage_iterations = Vec::with_capacity(problem.epsilon_schedule.len());
    let mut energy_trace = Vec::new();
    let mut grad_norm = max_abs(&grad);
    let mut stagnated = false;

    for (stage, &eps) in problem.epsilon_schedule.iter().enumerate() {
        let stage_start = iterations;
        if stage > 0 {
            gradient_into(&st, &grid, &field.values, p, eps, &mut grad);
        }
        grad_norm = max_abs(&grad);
        let mut energy = discrete_energy(&field, p, eps);
        energy_trace.push(energy);

        build_precond(&st, &grid, &field.values, p, eps, &mut precond);
        parallel::fill(&mut precond_grad, |i| grad[i] / precond[i]);
        for i in 0..m {
            dir[i] = -precond_grad[i];
        }
        let mut step = 1.0f64;
        let mut since_refresh = 0usize;
        let mut stagnant_steps = 0usize;
        stagnated = false;

        while grad_norm > target && iterations < problem.max_iterations {
            if since_refresh >= PRECOND_REFRESH {
                build_precond(&st, &grid, &field.values, p, eps, &mut precond);
                parallel::fill(&mut precond_grad, |i| grad[i] / precond[i]);
                for i in 0..m {
                    dir[i] = -precond_grad[i];
                }
                since_refresh = 0;
            }

            let mut slope = parallel::dot(&grad, &dir);
            if slope >= 0.0 {
                // not a descent direction: restart on steepest descent
                for i in 0..m {
                    dir[i] = -precond_grad[i];
                }
                slope = parallel::dot(&grad, &dir);
                if slope >= 0.0 {
                    stagnated = true;
                    break;
                }
            }

            let mut t = step;
            let mut accepted = None;
            for bt in 0..MAX_BACKTRACKS {
                trial.copy_from_slice(&field.values);
                for (j, &idx) in interior.iter().enumerate() {
                    trial[idx] += t * dir[j];
                }
                let e_trial = {
                    let f = GridField { grid: grid.clone(), values: std::mem::take(&mut trial) };
                    let e = discrete_energy(&f, p, eps);
                    trial = f.values;
                    e
                };
                if e_trial <= energy + ARMIJO_C1 * t * slope {
                    accepted = Some((t, e_trial, bt));
                    break;
                }
                t *= SHRINK;
            }

            let Some((t, e_new, backtracks)) = accepted else {
                // no representable decrease along a descent direction
                stagnated = true;
                break;
            };
            for (j, &idx) in interior.iter().enumerate() {
                field.values[idx] += t * dir[j];
            }
            iterations += 1;
            since_refresh += 1;
            let energy_drop = energy - e_new;
            energy = e_new;
            energy_trace.push(energy);
            step = if backtracks == 0 { (t * 2.0).min(4.0) } else { t };

            gradient_into(&st, &grid, &field.values, p, eps, &mut grad_next);
            parallel::fill(&mut precond_grad_next, |i| grad_next[i] / precond[i]);
            // Polak-Ribiere+ on the preconditioned gradient
            let denom = parallel::dot(&grad, &precond_grad);
            let num = parallel::indexed_sum(m, |i| grad_next[i] * (precond_grad_next[i] - precond_grad[i]));
            let beta = if denom > 0.0 { (num / denom).max(0.0) } else { 0.0 };
            for i in 0..m {
                dir[i] = -precond_grad_next[i] + beta * dir[i];
            }
            std::mem::swap(&mut grad, &mut grad_next);
            std::mem::swap(&mut precond_grad, &mut precond_grad_next);
            grad_norm = max_abs(&grad);

            if energy_drop.abs() <= STAGNATION_REL * energy.abs().max(1.0) {
                stagnant_steps += 1;
                if stagnant_steps >= 3 {
                    stagnated = true;
                    break;
                }
            } else {
                stagnant_steps = 0;
            }
        }
        stage_iterations.push(iterations - stage_start);
        if iterations >= problem.max_iterations && grad_norm > target && !stagnated {
            break;
        }
    }

    let converged = grad_norm <= target || stagnated;
    let weak = weak_residual(&field, p, 4, 0x3153_7531);
    let report = SolveReport {
        final_energy: discrete_energy(&field, p, *problem.epsilon_schedule.last().unwrap()),
        iterations,
        grad_norm,
        grad_reference,
        weak_residual: weak,
        converged,
        stage_iterations,
        energy_trace,
    };
    if converged {
        Ok((field, report))
    } else {
        Err(Error::NonConvergence {
            iterations,
            grad_norm,
            best: Box::new(SolveOutput { field, report }),
        })
    }
}

/// Diagonal second-difference estimate of the energy Hessian, clamped
/// positive; `1/D` is the preconditioner.
fn build_precond(st: &Stencil, grid: &Grid, values: &[f64], p: f64, eps: f64, out: &mut [f64]) {
    let interior = &grid.interior;
    let n = st.n;
    let mut dg2 = 0.0;
    for a in 0..n {
        dg2 += st.inv_den[a] * st.inv_den[a];
    }
    let cp = 1.0f64.min(p - 1.0);
    let floor = f64::MIN_POSITIVE.sqrt();
    parallel::fill(out, |j| {
        let idx = interior[j];
        let mi = grid.spec.multi_index(idx);
        let mut acc = 0.0;
        'corner: for m in 0..st.corners {
            let mut cell = 0usize;
            for a in 0..n {
                let bit = (m >> a) & 1;
                let c = mi[a] as isize - bit as isize;
                if c < 0 || c as usize > st.dims[a] - 2 {
                    continue 'corner;
                }
                cell += c as usize * st.cell_strides[a];
            }
            if !grid.cell_active[cell] {
                continue;
            }
            let base = idx - st.corner_offsets[m];
            let (_, g2) = st.gradient(values, base);
            acc += st.volume * powq(g2 + eps * eps, (p - 2.0) / 2.0);
        }
        (cp * p * dg2 * acc).max(floor)
    });
}

/// Closed-form radial solution profile: the general radially symmetric
/// p-harmonic function on the annulus is an affine transform of the
/// primitive of `s^((1-k)/(p-1))`.
#[derive(Debug, Clone, Copy)]
pub struct RadialProfile {
    pub r: f64,
    pub big_r: f64,
    pub k: usize,
    pub p: f64,
    pub value_r: f64,
    pub value_big_r: f64,
}

impl RadialProfile {
    /// Profile value at radius `t > 0` (monotone continuation outside
    /// `[r, R]` by the same formula).
    pub fn eval(&self, t: f64) -> f64 {
        let spec = BarrierSpec {
            r: self.r,
            big_r: self.big_r,
            k: self.k,
            n: self.k.max(2),
            p: self.p,
        };
        self.value_r + (self.value_big_r - self.value_r) * spec.u0_continued(t)
    }
}

/// Exact radial oracle for Dirichlet data that depends only on `d_k`.
pub fn solve_radial_ode(
    r: f64,
    big_r: f64,
    k: usize,
    p: f64,
    value_r: f64,
    value_big_r: f64,
) -> Result<RadialProfile> {
    // reuse the barrier validations
    let _ = BarrierSpec::new(r, big_r, k, k.max(2), p)?;
    Ok(RadialProfile { r, big_r, k, p, value_r, value_big_r })
}

/// Discrete weak-form residual probe: pairs the flux `|grad v|^(p-2)
/// grad v` against the gradients of random compactly supported bump
/// fields and returns the worst normalized pairing.
pub fn weak_residual(field: &GridField, p: f64, trials: usize, seed: u64) -> f64 {
    let grid = &field.grid;
    let spec = &grid.spec;
    let st = Stencil::new(grid);
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    if grid.interior.is_empty() {
        return 0.0;
    }

    for _ in 0..trials.max(1) {
        let center_idx = grid.interior[rng.gen_range(0..grid.interior.len())];
        let center = spec.position(center_idx);
        let mut widths = [0.0f64; MAX_DIM];
        for a in 0..n {
            let extent = (spec.dims[a] - 1) as f64 * spec.spacing[a];
            let lo = 3.0 * spec.spacing[a];
            let hi = (extent / 6.0).max(lo * 1.5);
            widths[a] = lo + rng.gen_range(0.0..1.0) * (hi - lo);
        }

        // shrink until the closed support box contains interior nodes only
        let mut node_lo = [0usize; MAX_DIM];
        let mut node_hi = [0usize; MAX_DIM];
        let mut ok = false;
        for _ in 0..24 {
            let mut fits = true;
            for a in 0..n {
                let lo = ((center[a] - widths[a] - spec.origin[a]) / spec.spacing[a]).ceil() as isize;
                let hi = ((center[a] + widths[a] - spec.origin[a]) / spec.spacing[a]).floor() as isize;
                if lo < 1 || hi as usize >= spec.dims[a] - 1 || hi < lo {
                    fits = false;
                    break;
                }
                node_lo[a] = lo as usize;
                node_hi[a] = hi as usize;
            }
            if fits {
                let mut all_interior = true;
                'scan: for flat in 0..box_len(&node_lo, &node_hi, n) {
                    let idx = box_node(spec, &node_lo, &node_hi, n, flat);
                    if grid.mask[idx] != NodeKind::Interior {
                        all_interior = false;
                        break 'scan;
                    }
                }
                if all_interior {
                    ok = true;
                    break;
                }
            }
            for w in widths.iter_mut().take(n) {
                *w *= 0.6;
            }
            if widths[0] < 2.0 * spec.spacing[0] {
                break;
            }
        }
        if !ok {
            continue;
        }

        // nodal bump values on the support box
        let bump = |pos: &[f64]| -> f64 {
            let mut v = 1.0;
            for a in 0..n {
                let s = (pos[a] - center[a]) / widths[a];
                if s.abs() >= 1.0 {
                    return 0.0;
                }
                v *= 0.5 * (1.0 + (std::f64::consts::PI * s).cos());
            }
            v
        };
        let mut phi = vec![0.0f64; spec.node_count()];
        for flat in 0..box_len(&node_lo, &node_hi, n) {
            let idx = box_node(spec, &node_lo, &node_hi, n, flat);
            let pos = spec.position(idx);
            phi[idx] = bump(&pos[..n]);
        }

        // pair flux against grad(phi) over cells touching the support
        let strides = spec.cell_strides();
        let mut cell_lo = [0usize; MAX_DIM];
        let mut cell_hi = [0usize; MAX_DIM];
        for a in 0..n {
            cell_lo[a] = node_lo[a] - 1;
            cell_hi[a] = node_hi[a];
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for flat in 0..box_len(&cell_lo, &cell_hi, n) {
            let mut rem = flat;
            let mut cell = 0usize;
            for a in 0..n {
                let w = cell_hi[a] - cell_lo[a] + 1;
                let c = cell_lo[a] + rem % w;
                rem /= w;
                cell += c * strides[a];
            }
            if !grid.cell_active[cell] {
                continue;
            }
            let base = st.cell_base(cell);
            let (g, g2) = st.gradient(&field.values, base);
            let (gp, gp2) = st.gradient(&phi, base);
            let coef = if g2 == 0.0 { 0.0 } else { powq(g2, (p - 2.0) / 2.0) };
            let mut dot = 0.0;
            for a in 0..n {
                dot += coef * g[a] * gp[a];
            }
            num += dot * st.volume;
            den += gp2.sqrt() * st.volume;
        }
        if den > 0.0 {
            worst = worst.max((num / den).abs());
        }
    }
    worst
}

fn box_len(lo: &[usize; MAX_DIM], hi: &[usize; MAX_DIM], n: usize) -> usize {
    (0..n).map(|a| hi[a] - lo[a] + 1).product()
}

fn box_node(
    spec: &crate::geometry::GridSpec,
    lo: &[usize; MAX_DIM],
    hi: &[usize; MAX_DIM],
    n: usize,
    flat: usize,
) -> usize {
    let strides = spec.node_strides();
    let mut rem = flat;
    let mut idx = 0usize;
    for a in 0..n {
        let w = hi[a] - lo[a] + 1;
        idx += (lo[a] + rem % w) * strides[a];
        rem /= w;
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GridField;

    fn unit_square(cells: usize) -> Arc<Grid> {
        Grid::rectangular(2, [0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], cells).unwrap()
    }

    #[test]
    fn energy_of_affine_field_is_exact() {
        let grid = unit_square(16);
        let f = GridField::from_fn(grid, |p| p[0]);
        // |grad u| = 1 on the unit square
        assert!((discrete_energy(&f, 2.0, 0.0) - 1.0).abs() < 1e-12);
        assert!((discrete_energy(&f, 3.0, 0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn energy_of_constant_field() {
        let grid = unit_square(16);
        let f = GridField::constant(grid, 4.0);
        let eps = 0.125f64;
        let expect = eps.powi(3); // eps^p * volume, p = 3
        assert!((discrete_energy(&f, 3.0, eps) - expect).abs() < 1e-14);
    }

    #[test]
    fn affine_fields_are_discrete_solutions() {
        // zero energy gradient at every interior node, for every p
        let ann = KAnnulus::new(2, 2, 1.0, 2.0).unwrap();
        let grid = build_grid(&ann, 24).unwrap();
        let f = GridField::from_fn(grid, |p| 3.0 * p[0] - 0.25);
        for p in [1.5, 2.0, 3.0, 4.5] {
            let g = energy_gradient(&f, p, 0.0);
            let norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(norm <= 1e-12, "p={p} residual {norm:.3e}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        use rand::Rng;
        let ann = KAnnulus::new(2, 2, 1.0, 2.0).unwrap();
        let grid = build_grid(&ann, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in [1.5, 2.0, 3.0] {
            for _ in 0..10 {
                let mut f = GridField::from_fn(grid.clone(), |pos| {
                    (pos[0] * 1.7).sin() + 0.3 * pos[1]
                });
                for &idx in &grid.interior {
                    f.values[idx] += 0.05 * rng.gen_range(-1.0..1.0);
                }
                let eps = 0.05;
                let g = energy_gradient(&f, p, eps);
                for _ in 0..10 {
                    let j = rng.gen_range(0..grid.interior.len());
                    let idx = grid.interior[j];
                    let h = 1e-6;
                    let orig = f.values[idx];
                    f.values[idx] = orig + h;
                    let ep = discrete_energy(&f, p, eps);
                    f.values[idx] = orig - h;
                    let em = discrete_energy(&f, p, eps);
                    f.values[idx] = orig;
                    let fd = (ep - em) / (2.0 * h);
                    let scale = fd.abs().max(g[j].abs()).max(1e-8);
                    assert!(
                        (fd - g[j]).abs() / scale < 1e-6,
                        "p={p}: fd={fd:.9e} analytic={:.9e}",
                        g[j]
                    );
                }
            }
        }
    }

    #[test]
    fn constant_boundary_solves_immediately() {
        let ann = KAnnulus::new(2, 2, 1.0, 2.0).unwrap();
        let problem = PLaplaceProblem::new(ann, 2.5, BoundaryData::Constant(3.25), 16);
        let (field, report) = solve_dirichlet(&problem).unwrap();
        assert_eq!(report.iterations, 0);
        assert!(report.converged);
        for &idx in &field.grid.interior {
            assert!((field.values[idx] - 3.25).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_nodes_are_fixed_exactly() {
        let ann = KAnnulus::new(2, 2, 1.0, 2.0).unwrap();
        let spec = BarrierSpec::new(1.0, 2.0, 2, 2, 3.0).unwrap();
        let boundary = BoundaryData::Barrier(spec);
        let problem = PLaplaceProblem::new(ann, 3.0, boundary.clone(), 20);
        let (field, _) = solve_dirichlet(&problem).unwrap();
        let grid = &field.grid;
        for (idx, &v) in field.values.iter().enumerate() {
            if grid.mask[idx] == NodeKind::Boundary {
                let pos = grid.spec.position(idx);
                assert_eq!(v, boundary.evaluate(&pos[..2]));
            }
        }
    }

    #[test]
    fn radial_profile_values() {
        // barrier normalization
        let prof = solve_radial_ode(1.0, 2.0, 2, 2.0, 0.0, 1.0).unwrap();
        assert!((prof.eval(1.0) - 0.0).abs() < 1e-15);
        assert!((prof.eval(2.0) - 1.0).abs() < 1e-15);
        // constant data
        let c = solve_radial_ode(1.0, 2.0, 3, 1.5, 2.5, 2.5).unwrap();
        assert!((c.eval(1.7) - 2.5).abs() < 1e-15);
        // log profile midpoint: k=n=2, p=2, R=e^2, t=e
        let e = std::f64::consts::E;
        let prof = solve_radial_ode(1.0, e * e, 2, 2.0, 0.0, 1.0).unwrap();
        assert!((prof.eval(e) - 0.5).abs() < 1e-13);
    }

    #[test]
    fn weak_residual_vanishes_for_affine() {
        let grid = unit_square(32);
        let f = GridField::from_fn(grid, |p| 0.7 * p[0] - 0.2 * p[1] + 1.0);
        for p in [1.5, 2.0, 3.0] {
            assert!(weak_residual(&f, p, 8, 42) <= 1e-10, "p={p}");
        }
    }

    #[test]
    fn energy_is_monotone_across_accepted_iterates() {
        let ann = KAnnulus::new(2, 2, 1.0, 2.0).unwrap();
        let spec = BarrierSpec::new(1.0, 2.0, 2, 2, 3.0).unwrap();
        let problem = PLaplaceProblem::new(ann, 3.0, BoundaryData::Barrier(spec), 24);
        let (_, report) = solve_dirichlet(&problem).unwrap();
        // within a stage energies decrease; across stages eps shrinks,
        // which also lowers the energy of the warm start
        for w in report.energy_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-13 * w[0].abs().max(1.0));
        }
        assert!(report.converged);
    }
}
