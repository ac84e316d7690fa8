//! k-annuli, the anisotropic distance `d_k`, tensor grids and k-sphere
//! quadrature.
//!
//! The domain of interest is `D_{alpha,beta} = {alpha < d_k(x) < beta}`
//! in `R^n`, where `d_k(x) = (x_1^2 + ... + x_k^2)^(1/2)`. For `k < n`
//! the annulus is unbounded in the trailing `n - k` directions and all
//! computations truncate those directions to a slab `|x_j| <= L`; every
//! surface or volume measure produced here is the truncated one.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest supported space dimension.
pub const MAX_DIM: usize = 4;

/// Fixed-size position buffer; only the first `n` entries are used.
pub type Point = [f64; MAX_DIM];

/// Euclidean norm of the first `k` coordinates of `x`.
pub fn d_k(x: &[f64], k: usize) -> Result<f64> {
    if k < 1 || k > x.len() {
        return Err(Error::domain(format!(
            "symmetry index k={k} out of range 1..={}",
            x.len()
        )));
    }
    Ok(norm_k(x, k))
}

#[inline]
fn norm_k(x: &[f64], k: usize) -> f64 {
    let mut s = 0.0;
    for v in &x[..k] {
        s += v * v;
    }
    s.sqrt()
}

/// The domain `{alpha < d_k(x) < beta}` in `R^n`, truncated to the slab
/// `|x_j| <= slab_halfwidth` in the trailing directions when `k < n`.
///
/// An unbounded outer radius is realized numerically by passing the
/// finite stand-in radius as `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KAnnulus {
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Half-width `L` of the truncation slab; unused when `k = n`.
    pub slab_halfwidth: f64,
}

impl KAnnulus {
    /// New annulus with the default truncation `L = 4 * beta`.
    pub fn new(n: usize, k: usize, alpha: f64, beta: f64) -> Result<Self> {
        Self::with_slab(n, k, alpha, beta, 4.0 * beta)
    }

    pub fn with_slab(n: usize, k: usize, alpha: f64, beta: f64, slab_halfwidth: f64) -> Result<Self> {
        if n < 2 || n > MAX_DIM {
            return Err(Error::config(format!("dimension n={n} outside 2..={MAX_DIM}")));
        }
        if k < 1 || k > n {
            return Err(Error::config(format!("symmetry index k={k} outside 1..={n}")));
        }
        if !(alpha >= 0.0 && beta > alpha && beta.is_finite()) {
            return Err(Error::config(format!(
                "radii must satisfy 0 <= alpha < beta (got alpha={alpha}, beta={beta})"
            )));
        }
        if k < n && !(slab_halfwidth > 0.0) {
            return Err(Error::config("slab half-width must be positive".to_string()));
        }
        Ok(KAnnulus { n, k, alpha, beta, slab_halfwidth })
    }

    /// True when the trailing directions are truncated (`k < n`).
    pub fn truncated(&self) -> bool {
        self.k < self.n
    }

    /// Strict interior test: `alpha < d_k(x) < beta` and inside the slab.
    pub fn contains(&self, x: &[f64]) -> bool {
        let d = norm_k(x, self.k);
        if !(self.alpha < d && d < self.beta) {
            return false;
        }
        x[self.k..self.n].iter().all(|&v| v.abs() < self.slab_halfwidth)
    }

    /// Axis-aligned bounding box of the truncated annulus.
    pub fn bounding_box(&self) -> ([f64; MAX_DIM], [f64; MAX_DIM]) {
        let mut lo = [0.0; MAX_DIM];
        let mut hi = [0.0; MAX_DIM];
        for a in 0..self.n {
            let r = if a < self.k { self.beta } else { self.slab_halfwidth };
            lo[a] = -r;
            hi[a] = r;
        }
        (lo, hi)
    }
}

/// Node classification on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum NodeKind {
    /// Strictly inside the domain; an unknown of the solver.
    Interior = 0,
    /// First layer of nodes outside the interior set; carries Dirichlet data.
    Boundary = 1,
    /// Neither interior nor adjacent to the interior; carries no value.
    Outside = 2,
}

/// Uniform tensor grid over an axis-aligned box. Spacing is uniform per
/// axis; different axes may differ when the box is not a cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    /// Node counts per axis (cells + 1).
    pub dims: [usize; MAX_DIM],
    pub spacing: [f64; MAX_DIM],
    pub origin: [f64; MAX_DIM],
}

impl GridSpec {
    pub fn new(n: usize, dims: [usize; MAX_DIM], spacing: [f64; MAX_DIM], origin: [f64; MAX_DIM]) -> Result<Self> {
        if n < 2 || n > MAX_DIM {
            return Err(Error::config(format!("dimension n={n} outside 2..={MAX_DIM}")));
        }
        for a in 0..n {
            if dims[a] < 2 {
                return Err(Error::config("need at least 2 nodes per axis".to_string()));
            }
            if !(spacing[a] > 0.0) {
                return Err(Error::config("grid spacing must be positive".to_string()));
            }
        }
        Ok(GridSpec { n, dims, spacing, origin })
    }

    /// Total number of nodes.
    pub fn node_count(&self) -> usize {
        self.dims[..self.n].iter().product()
    }

    /// Total number of cells.
    pub fn cell_count(&self) -> usize {
        self.dims[..self.n].iter().map(|d| d - 1).product()
    }

    /// Row-major node strides (last axis fastest).
    pub fn node_strides(&self) -> [usize; MAX_DIM] {
        let mut s = [0usize; MAX_DIM];
        s[self.n - 1] = 1;
        for a in (0..self.n - 1).rev() {
            s[a] = s[a + 1] * self.dims[a + 1];
        }
        s
    }

    /// Row-major cell strides (last axis fastest).
    pub fn cell_strides(&self) -> [usize; MAX_DIM] {
        let mut s = [0usize; MAX_DIM];
        s[self.n - 1] = 1;
        for a in (0..self.n - 1).rev() {
            s[a] = s[a + 1] * (self.dims[a + 1] - 1);
        }
        s
    }

    pub fn multi_index(&self, idx: usize) -> [usize; MAX_DIM] {
        let strides = self.node_strides();
        let mut rem = idx;
        let mut mi = [0usize; MAX_DIM];
        for a in 0..self.n {
            mi[a] = rem / strides[a];
            rem %= strides[a];
        }
        mi
    }

    pub fn position(&self, idx: usize) -> Point {
        let mi = self.multi_index(idx);
        let mut p = [0.0; MAX_DIM];
        for a in 0..self.n {
            p[a] = self.origin[a] + mi[a] as f64 * self.spacing[a];
        }
        p
    }

    /// Volume of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing[..self.n].iter().product()
    }
}

/// A grid together with its node classification.
#[derive(Debug)]
pub struct Grid {
    pub spec: GridSpec,
    pub mask: Vec<NodeKind>,
    /// Indices of interior nodes, ascending; the solver's unknown order.
    pub interior: Vec<usize>,
    /// Flags per cell: true iff all `2^n` corner nodes carry values.
    pub cell_active: Vec<bool>,
    /// Indices of active cells, ascending.
    pub active_cells: Vec<usize>,
}

impl Grid {
    /// Classifies nodes against an arbitrary open set given by `inside`.
    ///
    /// Interior nodes satisfy the indicator exactly (no sub-cell
    /// geometry); boundary nodes are the first layer outside the
    /// interior set, i.e. non-interior nodes sharing a cell with an
    /// interior node.
    pub fn from_indicator<F>(spec: GridSpec, inside: F) -> Self
    where
        F: Fn(&[f64]) -> bool + Sync,
    {
        let n = spec.n;
        let count = spec.node_count();
        let mut is_interior = vec![false; count];
        crate::parallel::fill_bool(&mut is_interior, |idx| {
            let p = spec.position(idx);
            inside(&p[..n])
        });

        let strides = spec.node_strides();
        let dims = spec.dims;
        let mask_from = |idx: usize| -> NodeKind {
            if is_interior[idx] {
                return NodeKind::Interior;
            }
            // Moore neighborhood scan: a node one step (per axis) away
            // from an interior node shares a cell with it.
            let mi = {
                let mut rem = idx;
                let mut mi = [0usize; MAX_DIM];
                for a in 0..n {
                    mi[a] = rem / strides[a];
                    rem %= strides[a];
                }
                mi
            };
            let mut offsets = [[0isize; 3]; MAX_DIM];
            let mut counts = [0usize; MAX_DIM];
            for a in 0..n {
                let mut c = 0;
                for d in [-1isize, 0, 1] {
                    let j = mi[a] as isize + d;
                    if j >= 0 && (j as usize) < dims[a] {
                        offsets[a][c] = d;
                        c += 1;
                    }
                }
                counts[a] = c;
            }
            let mut choice = [0usize; MAX_DIM];
            loop {
                let mut neighbor = idx as isize;
                let mut all_zero = true;
                for a in 0..n {
                    let d = offsets[a][choice[a]];
                    all_zero &= d == 0;
                    neighbor += d * strides[a] as isize;
                }
                if !all_zero && is_interior[neighbor as usize] {
                    return NodeKind::Boundary;
                }
                // advance the mixed-radix counter
                let mut a = 0;
                loop {
                    if a == n {
                        return NodeKind::Outside;
                    }
                    choice[a] += 1;
                    if choice[a] < counts[a] {
                        break;
                    }
                    choice[a] = 0;
                    a += 1;
                }
            }
        };

        let mut mask_raw = vec![0u8; count];
        crate::parallel::fill_u8(&mut mask_raw, |idx| mask_from(idx) as u8);
        let mask: Vec<NodeKind> = mask_raw
            .into_iter()
            .map(|b| match b {
                0 => NodeKind::Interior,
                1 => NodeKind::Boundary,
                _ => NodeKind::Outside,
            })
            .collect();

        Grid::from_mask(spec, mask)
    }

    /// Assembles the derived node and cell tables from an existing
    /// classification (the deserialization path).
    pub fn from_mask(spec: GridSpec, mask: Vec<NodeKind>) -> Self {
        let n = spec.n;
        let count = spec.node_count();
        assert_eq!(mask.len(), count, "mask length mismatch");
        let strides = spec.node_strides();
        let interior: Vec<usize> = (0..count).filter(|&i| mask[i] == NodeKind::Interior).collect();

        let cell_count = spec.cell_count();
        let cell_strides = spec.cell_strides();
        let corners = 1usize << n;
        let mut cell_active_raw = vec![0u8; cell_count];
        crate::parallel::fill_u8(&mut cell_active_raw, |cell| {
            let mut rem = cell;
            let mut base = 0usize;
            for a in 0..n {
                let c = rem / cell_strides[a];
                rem %= cell_strides[a];
                base += c * strides[a];
            }
            for m in 0..corners {
                let mut corner = base;
                for a in 0..n {
                    if (m >> a) & 1 == 1 {
                        corner += strides[a];
                    }
                }
                if mask[corner] == NodeKind::Outside {
                    return 0;
                }
            }
            1
        });
        let cell_active: Vec<bool> = cell_active_raw.into_iter().map(|b| b == 1).collect();
        let active_cells: Vec<usize> = (0..cell_count).filter(|&c| cell_active[c]).collect();

        Grid { spec, mask, interior, cell_active, active_cells }
    }

    /// Grid over a plain box domain; interior is the strict inside.
    /// Mostly useful for tests and calibration fields.
    pub fn rectangular(n: usize, lo: [f64; MAX_DIM], hi: [f64; MAX_DIM], cells: usize) -> Result<Arc<Self>> {
        if cells < 2 {
            return Err(Error::config("need at least 2 cells per axis".to_string()));
        }
        let mut dims = [1usize; MAX_DIM];
        let mut spacing = [1.0; MAX_DIM];
        for a in 0..n {
            dims[a] = cells + 1;
            spacing[a] = (hi[a] - lo[a]) / cells as f64;
        }
        let spec = GridSpec::new(n, dims, spacing, lo)?;
        let eps = 1e-12;
        let grid = Grid::from_indicator(spec, |p| {
            (0..n).all(|a| p[a] > lo[a] + eps * spacing[a] && p[a] < hi[a] - eps * spacing[a])
        });
        Ok(Arc::new(grid))
    }

    pub fn node_kind(&self, idx: usize) -> NodeKind {
        self.mask[idx]
    }
}

/// Builds the grid for a truncated annulus with `cells_per_axis` cells
/// on every axis of its bounding box.
pub fn build_grid(annulus: &KAnnulus, cells_per_axis: usize) -> Result<Arc<Grid>> {
    if cells_per_axis < 8 {
        return Err(Error::config(format!(
            "cells_per_axis={cells_per_axis} is below the minimum of 8"
        )));
    }
    let (lo, hi) = annulus.bounding_box();
    let mut dims = [1usize; MAX_DIM];
    let mut spacing = [1.0; MAX_DIM];
    for a in 0..annulus.n {
        dims[a] = cells_per_axis + 1;
        spacing[a] = (hi[a] - lo[a]) / cells_per_axis as f64;
    }
    let spec = GridSpec::new(annulus.n, dims, spacing, lo)?;
    let ann = *annulus;
    Ok(Arc::new(Grid::from_indicator(spec, move |p| ann.contains(p))))
}

/// A scalar field sampled at grid nodes. Values at `Outside` nodes are
/// zero placeholders and never read by the numerics.
#[derive(Debug, Clone)]
pub struct GridField {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn constant(grid: Arc<Grid>, value: f64) -> Self {
        let n = grid.spec.node_count();
        let mut values = vec![0.0; n];
        for i in 0..n {
            if grid.mask[i] != NodeKind::Outside {
                values[i] = value;
            }
        }
        GridField { grid, values }
    }

    /// Samples `f` at every non-outside node.
    pub fn from_fn<F>(grid: Arc<Grid>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let spec = grid.spec.clone();
        let mask = &grid.mask;
        let n = spec.n;
        let mut values = vec![0.0; spec.node_count()];
        crate::parallel::fill(&mut values, |idx| {
            if mask[idx] == NodeKind::Outside {
                0.0
            } else {
                let p = spec.position(idx);
                f(&p[..n])
            }
        });
        GridField { grid, values }
    }

    /// Multilinear interpolation at `pos`. Returns `None` when the
    /// containing cell touches an `Outside` node (no value there).
    pub fn interpolate(&self, pos: &[f64]) -> Option<f64> {
        interpolate_values(&self.grid, &self.values, pos)
    }
}

pub(crate) fn interpolate_values(grid: &Grid, values: &[f64], pos: &[f64]) -> Option<f64> {
    let spec = &grid.spec;
    let n = spec.n;
    let strides = spec.node_strides();
    let mut base = 0usize;
    let mut frac = [0.0f64; MAX_DIM];
    for a in 0..n {
        let s = (pos[a] - spec.origin[a]) / spec.spacing[a];
        if s < -1e-9 || s > (spec.dims[a] - 1) as f64 + 1e-9 {
            return None;
        }
        let mut i = s.floor() as isize;
        i = i.clamp(0, spec.dims[a] as isize - 2);
        frac[a] = (s - i as f64).clamp(0.0, 1.0);
        base += i as usize * strides[a];
    }
    let corners = 1usize << n;
    let mut acc = 0.0;
    for m in 0..corners {
        let mut idx = base;
        let mut w = 1.0;
        for a in 0..n {
            if (m >> a) & 1 == 1 {
                idx += strides[a];
                w *= frac[a];
            } else {
                w *= 1.0 - frac[a];
            }
        }
        if grid.mask[idx] == NodeKind::Outside {
            return None;
        }
        acc += w * values[idx];
    }
    Some(acc)
}

/// A vector field on grid nodes, stored per component.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub grid: Arc<Grid>,
    pub components: Vec<Vec<f64>>,
}

impl VectorField {
    /// Interpolated vector at `pos`; `None` on cells touching outside nodes.
    pub fn interpolate(&self, pos: &[f64]) -> Option<Point> {
        let mut out = [0.0; MAX_DIM];
        for (a, comp) in self.components.iter().enumerate() {
            out[a] = interpolate_values(&self.grid, comp, pos)?;
        }
        Some(out)
    }
}

/// Nodal gradient of a field by central differences, falling back to
/// one-sided differences where a neighbor carries no value. Outside
/// nodes get zero components.
pub fn central_gradient(field: &GridField) -> VectorField {
    let grid = field.grid.clone();
    let spec = &grid.spec;
    let n = spec.n;
    let strides = spec.node_strides();
    let values = &field.values;
    let mut components = Vec::with_capacity(n);
    for a in 0..n {
        let mut comp = vec![0.0f64; spec.node_count()];
        let h = spec.spacing[a];
        crate::parallel::fill(&mut comp, |idx| {
            if grid.mask[idx] == NodeKind::Outside {
                return 0.0;
            }
            let mi = spec.multi_index(idx);
            let has_lo = mi[a] > 0 && grid.mask[idx - strides[a]] != NodeKind::Outside;
            let has_hi = mi[a] + 1 < spec.dims[a] && grid.mask[idx + strides[a]] != NodeKind::Outside;
            match (has_lo, has_hi) {
                (true, true) => (values[idx + strides[a]] - values[idx - strides[a]]) / (2.0 * h),
                (false, true) => (values[idx + strides[a]] - values[idx]) / h,
                (true, false) => (values[idx] - values[idx - strides[a]]) / h,
                (false, false) => 0.0,
            }
        });
        components.push(comp);
    }
    VectorField { grid, components }
}

/// One quadrature node on a (truncated) k-sphere.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub position: Point,
    pub weight: f64,
}

/// Quadrature covering `Sigma_k(t)` intersected with the truncation slab.
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    pub points: Vec<QuadPoint>,
    pub total_weight: f64,
    /// True when the measure is slab-truncated (`k < n`).
    pub truncated: bool,
}

/// Tensor-product quadrature on the truncated k-sphere `Sigma_k(t)`.
///
/// Directional rules: two signed points for `k = 1`; uniform angles for
/// `k = 2`; latitude-longitude with `sin` weights (midpoint in the polar
/// angles) for `k = 3, 4`. Trailing slab directions use a trapezoid rule
/// with `density` nodes per axis, so the weights sum to the truncated
/// surface measure exactly in the axial factors and to second order in
/// the spherical ones.
pub fn sample_ksphere(annulus: &KAnnulus, t: f64, density: usize) -> Result<SphereQuadrature> {
    if !(t >= annulus.alpha && t <= annulus.beta) {
        return Err(Error::domain(format!(
            "radius t={t} outside [{}, {}]",
            annulus.alpha, annulus.beta
        )));
    }
    if density < 2 {
        return Err(Error::domain("quadrature density must be at least 2".to_string()));
    }
    let k = annulus.k;
    let n = annulus.n;

    // Directional part: points on S^{k-1}(t) with surface weights.
    let mut dirs: Vec<(Point, f64)> = Vec::new();
    match k {
        1 => {
            dirs.push(([t, 0.0, 0.0, 0.0], 1.0));
            dirs.push(([-t, 0.0, 0.0, 0.0], 1.0));
        }
        2 => {
            let m = density;
            let w = t * std::f64::consts::TAU / m as f64;
            for i in 0..m {
                let th = std::f64::consts::TAU * i as f64 / m as f64;
                dirs.push(([t * th.cos(), t * th.sin(), 0.0, 0.0], w));
            }
        }
        3 => {
            let m_th = density;
            let m_ph = 2 * density;
            let dth = std::f64::consts::PI / m_th as f64;
            let dph = std::f64::consts::TAU / m_ph as f64;
            for j in 0..m_th {
                let th = (j as f64 + 0.5) * dth;
                let w = t * t * th.sin() * dth * dph;
                for i in 0..m_ph {
                    let ph = i as f64 * dph;
                    dirs.push((
                        [t * th.cos(), t * th.sin() * ph.cos(), t * th.sin() * ph.sin(), 0.0],
                        w,
                    ));
                }
            }
        }
        4 => {
            let m1 = density;
            let m2 = density;
            let m_ph = 2 * density;
            let d1 = std::f64::consts::PI / m1 as f64;
            let d2 = std::f64::consts::PI / m2 as f64;
            let dph = std::f64::consts::TAU / m_ph as f64;
            for j1 in 0..m1 {
                let th1 = (j1 as f64 + 0.5) * d1;
                for j2 in 0..m2 {
                    let th2 = (j2 as f64 + 0.5) * d2;
                    let w = t.powi(3) * th1.sin().powi(2) * th2.sin() * d1 * d2 * dph;
                    for i in 0..m_ph {
                        let ph = i as f64 * dph;
                        dirs.push((
                            [
                                t * th1.cos(),
                                t * th1.sin() * th2.cos(),
                                t * th1.sin() * th2.sin() * ph.cos(),
                                t * th1.sin() * th2.sin() * ph.sin(),
                            ],
                            w,
                        ));
                    }
                }
            }
        }
        _ => unreachable!("k validated by KAnnulus"),
    }

    // Axial part: trapezoid nodes on [-L, L] per trailing axis.
    let axial_axes = n - k;
    let mut points = Vec::new();
    let mut total = 0.0;
    if axial_axes == 0 {
        for (p, w) in dirs {
            total += w;
            points.push(QuadPoint { position: p, weight: w });
        }
    } else {
        let l = annulus.slab_halfwidth;
        let m = density;
        let h = 2.0 * l / (m - 1) as f64;
        let mut axial_nodes = Vec::with_capacity(m);
        for j in 0..m {
            let w = if j == 0 || j == m - 1 { 0.5 * h } else { h };
            axial_nodes.push((-l + j as f64 * h, w));
        }
        let mut choice = vec![0usize; axial_axes];
        loop {
            let mut ax_pos = [0.0f64; MAX_DIM];
            let mut ax_w = 1.0;
            for (slot, &c) in choice.iter().enumerate() {
                let (x, w) = axial_nodes[c];
                ax_pos[k + slot] = x;
                ax_w *= w;
            }
            for &(dir, dw) in &dirs {
                let mut p = dir;
                p[k..n].copy_from_slice(&ax_pos[k..n]);
                let w = dw * ax_w;
                total += w;
                points.push(QuadPoint { position: p, weight: w });
            }
            let mut slot = 0;
            loop {
                if slot == axial_axes {
                    let total_weight = total;
                    return Ok(SphereQuadrature { points, total_weight, truncated: true });
                }
                choice[slot] += 1;
                if choice[slot] < m {
                    break;
                }
                choice[slot] = 0;
                slot += 1;
            }
        }
    }
    Ok(SphereQuadrature { points, total_weight: total, truncated: false })
}

/// Analytic surface measure of `S^{k-1}(t)` (counting measure for k=1).
pub fn sphere_surface_measure(k: usize, t: f64) -> f64 {
    match k {
        1 => 2.0,
        2 => std::f64::consts::TAU * t,
        3 => 2.0 * std::f64::consts::TAU * t * t,
        4 => 2.0 * std::f64::consts::PI * std::f64::consts::PI * t.powi(3),
        _ => f64::NAN,
    }
}
