//! Sphere maxima, the three-spheres bound check, growth weights and the
//! condenser-type extremal cutoff.
//!
//! Sphere maxima are sampled-and-interpolated surrogates for the
//! boundary limsup: the field is multilinearly interpolated at k-sphere
//! quadrature points and the maximum over the samples is returned, so
//! every verdict is relative to the sampling density it reports. For
//! `k < n` all surface and volume integrals are slab-truncated and the
//! reports say so.

use serde::Serialize;

use crate::barrier::{BarrierFields, BarrierSpec};
use crate::geometry::{sample_ksphere, GridField, KAnnulus, NodeKind, VectorField};
use crate::{Error, Result};

/// Interpolated maximum of `field` over the (truncated) k-sphere of
/// radius `t`. Sample points whose cell touches an unvalued node are
/// skipped; it is an error if every point is skipped.
pub fn max_on_sphere(field: &GridField, annulus: &KAnnulus, t: f64, density: usize) -> Result<f64> {
    let quad = sample_ksphere(annulus, t, density)?;
    let n = annulus.n;
    let mut best = f64::NEG_INFINITY;
    let mut seen = 0usize;
    for pt in &quad.points {
        if let Some(v) = field.interpolate(&pt.position[..n]) {
            best = best.max(v);
            seen += 1;
        }
    }
    if seen == 0 {
        return Err(Error::domain(format!(
            "no interpolable samples on the sphere of radius {t}; grid too coarse there"
        )));
    }
    Ok(best)
}

/// Affine renormalization `(v - m_r) / (m_big_r - m_r)`.
pub fn normalize(field: &GridField, m_r: f64, m_big_r: f64) -> Result<GridField> {
    if !(m_big_r > m_r) {
        return Err(Error::Degenerate(format!(
            "normalization undefined: outer maximum {m_big_r} does not exceed inner maximum {m_r}"
        )));
    }
    let scale = 1.0 / (m_big_r - m_r);
    let grid = field.grid.clone();
    let mut values = vec![0.0f64; field.values.len()];
    crate::parallel::fill(&mut values, |i| {
        if grid.mask[i] == NodeKind::Outside {
            0.0
        } else {
            (field.values[i] - m_r) * scale
        }
    });
    Ok(GridField { grid, values })
}

/// One radius of a bound check.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundEntry {
    pub t: f64,
    pub max_value: f64,
    pub bound: f64,
    /// `bound - max_value`; negative means the bound is violated.
    pub margin: f64,
}

/// Per-radius record of sphere maxima against the barrier bound.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub r: f64,
    pub big_r: f64,
    pub m_r: f64,
    pub m_big_r: f64,
    pub entries: Vec<BoundEntry>,
    pub tolerance: f64,
    pub density: usize,
    /// True when maxima are taken over slab-truncated spheres.
    pub truncated: bool,
    pub slab_halfwidth: Option<f64>,
    pub pass: bool,
}

impl BoundReport {
    pub fn worst_margin(&self) -> f64 {
        self.entries.iter().map(|e| e.margin).fold(f64::INFINITY, f64::min)
    }
}

/// Checks `M(t) <= (M(R) - M(r)) * u0(t) + M(r)` at every radius in
/// `t_list`. The sphere maxima `M(r)`, `M(R)` come from the same field.
pub fn three_spheres_check(
    field: &GridField,
    annulus: &KAnnulus,
    barrier: &BarrierSpec,
    t_list: &[f64],
    density: usize,
    tolerance: f64,
) -> Result<BoundReport> {
    if t_list.is_empty() {
        return Err(Error::domain("t_list must be nonempty".to_string()));
    }
    let r = barrier.r;
    let big_r = barrier.big_r;
    if big_r > annulus.beta * (1.0 + 1e-12) {
        return Err(Error::domain(format!(
            "outer radius R={big_r} exceeds the solved field's outer radius {}",
            annulus.beta
        )));
    }
    let mut ts = t_list.to_vec();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if !(r < ts[0] && *ts.last().unwrap() < big_r) {
        return Err(Error::domain(format!(
            "radii must satisfy r < t < R (r={r}, R={big_r}, t in [{}, {}])",
            ts[0],
            ts.last().unwrap()
        )));
    }

    let m_r = max_on_sphere(field, annulus, r, density)?;
    let m_big_r = max_on_sphere(field, annulus, big_r, density)?;
    if !(m_big_r > m_r) {
        return Err(Error::Degenerate(format!(
            "three-spheres hypothesis violated: M(R)={m_big_r} does not exceed M(r)={m_r}"
        )));
    }

    let mut entries = Vec::with_capacity(ts.len());
    for &t in &ts {
        let m_t = max_on_sphere(field, annulus, t, density)?;
        let bound = (m_big_r - m_r) * barrier.u0(t)? + m_r;
        entries.push(BoundEntry { t, max_value: m_t, bound, margin: bound - m_t });
    }
    let pass = entries.iter().all(|e| e.margin >= -tolerance);
    Ok(BoundReport {
        r,
        big_r,
        m_r,
        m_big_r,
        entries,
        tolerance,
        density,
        truncated: annulus.truncated(),
        slab_halfwidth: annulus.truncated().then_some(annulus.slab_halfwidth),
        pass,
    })
}

/// A solved (normalized) field with its interpolable gradient, paired
/// with the barrier it is compared against.
pub struct ComparisonPair<'a> {
    pub v: &'a GridField,
    pub v_grad: &'a VectorField,
    pub barrier: &'a BarrierFields,
}

fn gradient_weight(pair: &ComparisonPair<'_>, pos: &[f64], e: f64) -> Option<f64> {
    let gv = pair.v_grad.interpolate(pos)?;
    let gu = pair.barrier.gradient.interpolate(pos)?;
    let n = pos.len();
    let mut gv2 = 0.0;
    let mut gu2 = 0.0;
    for a in 0..n {
        gv2 += gv[a] * gv[a];
        gu2 += gu[a] * gu[a];
    }
    Some(crate::solver::powq(gv2, e / 2.0) + crate::solver::powq(gu2, e / 2.0))
}

/// Surface integral
/// `H(t) = integral over Sigma_k(t) of |v - u|^2 (|grad v|^|p-2| + |grad u|^|p-2|)`,
/// truncated for `k < n`; quadrature over [`sample_ksphere`] points.
pub fn h_of_t(
    pair: &ComparisonPair<'_>,
    annulus: &KAnnulus,
    p: f64,
    t: f64,
    density: usize,
) -> Result<f64> {
    let quad = sample_ksphere(annulus, t, density)?;
    let n = annulus.n;
    let e = (p - 2.0).abs();
    let mut acc = 0.0;
    let mut seen = 0usize;
    for pt in &quad.points {
        let pos = &pt.position[..n];
        let (Some(v), Some(u), Some(w)) = (
            pair.v.interpolate(pos),
            pair.barrier.field.interpolate(pos),
            gradient_weight(pair, pos, e),
        ) else {
            continue;
        };
        let diff = v - u;
        acc += pt.weight * diff * diff * w;
        seen += 1;
    }
    if seen == 0 {
        return Err(Error::domain(format!(
            "no interpolable samples on the sphere of radius {t}"
        )));
    }
    Ok(acc)
}

/// The weight `H` sampled on a strictly increasing radius grid.
#[derive(Debug, Clone, Serialize)]
pub struct WeightProfile {
    pub ts: Vec<f64>,
    pub values: Vec<f64>,
}

impl WeightProfile {
    pub fn new(ts: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if ts.len() != values.len() || ts.len() < 2 {
            return Err(Error::domain("weight profile needs >= 2 matching samples".to_string()));
        }
        for w in ts.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::domain("radius grid must be strictly increasing".to_string()));
            }
        }
        for &v in &values {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::domain("weights must be finite and nonnegative".to_string()));
            }
        }
        Ok(WeightProfile { ts, values })
    }

    /// Samples `H` for a comparison pair over a radius grid.
    pub fn sample(
        pair: &ComparisonPair<'_>,
        annulus: &KAnnulus,
        p: f64,
        ts: &[f64],
        density: usize,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(ts.len());
        for &t in ts {
            values.push(h_of_t(pair, annulus, p, t, density)?);
        }
        WeightProfile::new(ts.to_vec(), values)
    }
}

/// Trend classification; a finite computation never proves divergence,
/// so these are fitted trends, not conclusions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trend {
    DivergingTrend,
    BoundedTrend,
    Inconclusive,
}

/// Partial reciprocal integrals `P(S) = integral from r to S of 1/H`
/// with a power-law fit of the integrand decay.
#[derive(Debug, Clone, Serialize)]
pub struct DivergenceDiagnostic {
    /// `(S, P(S))` pairs on the sampled grid.
    pub partials: Vec<(f64, f64)>,
    /// Fitted exponent `gamma` of `1/H(t) ~ t^gamma` over the largest
    /// sampled decade; `gamma >= -1` integrates to a divergent tail.
    pub fitted_exponent: Option<f64>,
    /// RMS residual of the log-log fit; large values mean "not a power
    /// law" and the verdict degrades to inconclusive.
    pub fit_rms: Option<f64>,
    pub verdict: Trend,
    /// True when `H` vanishes on samples, making `P` exactly infinite.
    pub exact: bool,
}

fn log_log_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    if xs.len() < 3 {
        return None;
    }
    let m = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..xs.len() {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let mut rss = 0.0;
    for i in 0..xs.len() {
        let pred = my + slope * (lx[i] - mx);
        rss += (ly[i] - pred) * (ly[i] - pred);
    }
    Some((slope, (rss / m).sqrt()))
}

/// Divergence diagnostic for the reciprocal integral of a weight
/// profile extended over increasing outer radii.
pub fn condition_star4(h: &WeightProfile) -> Result<DivergenceDiagnostic> {
    let ts = &h.ts;
    let vals = &h.values;
    let has_zero = vals.contains(&0.0);
    let mut partials = Vec::with_capacity(ts.len());
    if has_zero {
        for &t in ts {
            partials.push((t, f64::INFINITY));
        }
        return Ok(DivergenceDiagnostic {
            partials,
            fitted_exponent: None,
            fit_rms: None,
            verdict: Trend::DivergingTrend,
            exact: true,
        });
    }
    let mut acc = 0.0;
    partials.push((ts[0], 0.0));
    for i in 1..ts.len() {
        acc += 0.5 * (1.0 / vals[i - 1] + 1.0 / vals[i]) * (ts[i] - ts[i - 1]);
        partials.push((ts[i], acc));
    }

    // fit 1/H over the largest sampled decade
    let t_hi = *ts.last().unwrap();
    let cut = t_hi / 10.0;
    let mut fx = Vec::new();
    let mut fy = Vec::new();
    for i in 0..ts.len() {
        if ts[i] >= cut {
            fx.push(ts[i]);
            fy.push(1.0 / vals[i]);
        }
    }
    let fit = log_log_fit(&fx, &fy);
    let (verdict, fitted_exponent, fit_rms) = match fit {
        None => (Trend::Inconclusive, None, None),
        Some((gamma, rms)) => {
            let v = if rms > 0.25 {
                Trend::Inconclusive
            } else if gamma >= -1.0 - 0.05 {
                Trend::DivergingTrend
            } else {
                Trend::BoundedTrend
            };
            (v, Some(gamma), Some(rms))
        }
    };
    Ok(DivergenceDiagnostic { partials, fitted_exponent, fit_rms, verdict, exact: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitVerdict {
    VanishingTrend,
    NonvanishingTrend,
    Inconclusive,
}

/// One radius of the quadratic-mean chain check
/// `(S - r)^2 / P(S) <= integral from r to S of H`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HolderPoint {
    pub s: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; nonnegative up to roundoff.
    pub margin: f64,
}

/// Chain check derived from the Cauchy-Schwarz pairing of `H^(1/2)`
/// against `H^(-1/2)`; holds for every prefix of the profile.
pub fn holder_chain(h: &WeightProfile) -> Vec<HolderPoint> {
    let ts = &h.ts;
    let vals = &h.values;
    let r = ts[0];
    let mut inv_acc = 0.0;
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(ts.len() - 1);
    for i in 1..ts.len() {
        let dt = ts[i] - ts[i - 1];
        inv_acc += 0.5 * (1.0 / vals[i - 1] + 1.0 / vals[i]) * dt;
        acc += 0.5 * (vals[i - 1] + vals[i]) * dt;
        let s = ts[i];
        let lhs = if inv_acc.is_finite() && inv_acc > 0.0 {
            (s - r) * (s - r) / inv_acc
        } else {
            0.0
        };
        out.push(HolderPoint { s, lhs, rhs: acc, margin: acc - lhs });
    }
    out
}

/// Scaled volume integrals `Q(S)` with a trend fit, plus the chain
/// check on the accompanying surface-weight profile.
#[derive(Debug, Clone, Serialize)]
pub struct LimitDiagnostic {
    /// `(S, Q(S))` with `Q(S) = S^-2 * integral over D_{r,S} of
    /// |v - u|^2 (|grad v|^|p-2| + |grad u|^|p-2|)`.
    pub q: Vec<(f64, f64)>,
    pub fitted_slope: Option<f64>,
    pub verdict: LimitVerdict,
    /// True when the integrand vanishes identically on the samples.
    pub exact: bool,
    pub holder: Vec<HolderPoint>,
    pub truncated: bool,
}

/// Evaluates the volume-integral limit diagnostic over the outer radii
/// `s_list`, together with the chain check on `h`.
pub fn condition_star4b(
    pair: &ComparisonPair<'_>,
    annulus: &KAnnulus,
    p: f64,
    s_list: &[f64],
    h: &WeightProfile,
) -> Result<LimitDiagnostic> {
    if s_list.is_empty() {
        return Err(Error::domain("s_list must be nonempty".to_string()));
    }
    let grid = &pair.v.grid;
    let spec = &grid.spec;
    let n = spec.n;
    let e = (p - 2.0).abs();
    let r = pair.barrier.spec.r;
    let volume = spec.cell_volume();
    let strides = spec.node_strides();
    let cstrides = spec.cell_strides();

    // integrand at cell centers, sorted by center radius
    let mut cells: Vec<(f64, f64)> = Vec::with_capacity(grid.active_cells.len());
    for &cell in &grid.active_cells {
        let mut rem = cell;
        let mut pos = [0.0f64; crate::geometry::MAX_DIM];
        let mut base_check = 0usize;
        for a in 0..n {
            let c = rem / cstrides[a];
            rem %= cstrides[a];
            pos[a] = spec.origin[a] + (c as f64 + 0.5) * spec.spacing[a];
            base_check += c * strides[a];
        }
        let _ = base_check;
        let d = crate::geometry::d_k(&pos[..n], annulus.k)?;
        if d <= r {
            continue;
        }
        let p_slice = &pos[..n];
        let (Some(v), Some(u), Some(w)) = (
            pair.v.interpolate(p_slice),
            pair.barrier.field.interpolate(p_slice),
            gradient_weight(pair, p_slice, e),
        ) else {
            continue;
        };
        let diff = v - u;
        cells.push((d, diff * diff * w * volume));
    }
    cells.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut ss = s_list.to_vec();
    ss.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut q = Vec::with_capacity(ss.len());
    let mut idx = 0usize;
    let mut acc = 0.0;
    for &s in &ss {
        while idx < cells.len() && cells[idx].0 < s {
            acc += cells[idx].1;
            idx += 1;
        }
        q.push((s, acc / (s * s)));
    }

    let tiny = 1e-300;
    let exact = q.iter().all(|&(_, v)| v <= tiny);
    let (fitted_slope, verdict) = if exact {
        (None, LimitVerdict::VanishingTrend)
    } else {
        let cut = ss.last().unwrap() / 10.0;
        let mut fx = Vec::new();
        let mut fy = Vec::new();
        for &(s, v) in &q {
            if s >= cut && v > tiny {
                fx.push(s);
                fy.push(v);
            }
        }
        match log_log_fit(&fx, &fy) {
            None => (None, LimitVerdict::Inconclusive),
            Some((slope, rms)) => {
                let v = if rms > 0.25 {
                    LimitVerdict::Inconclusive
                } else if slope < -0.1 {
                    LimitVerdict::VanishingTrend
                } else if slope > 0.02 {
                    LimitVerdict::NonvanishingTrend
                } else {
                    LimitVerdict::Inconclusive
                };
                (Some(slope), v)
            }
        }
    };

    Ok(LimitDiagnostic {
        q,
        fitted_slope,
        verdict,
        exact,
        holder: holder_chain(h),
        truncated: annulus.truncated(),
    })
}

/// The extremal radial cutoff of a weight profile and its capacity.
#[derive(Debug, Clone, Serialize)]
pub struct ExtremalEta {
    pub ts: Vec<f64>,
    pub eta: Vec<f64>,
    /// `(integral of 1/H)^-1`; the minimum of the cutoff energy.
    pub capacity: f64,
    /// Set when `H` vanishes somewhere: capacity 0 and `eta` jumps.
    pub degenerate: bool,
}

/// Builds the energy-minimizing cutoff
/// `eta(s) = (int_{t0}^s 1/H) / (int_{t0}^{t1} 1/H)`.
pub fn extremal_eta(h: &WeightProfile) -> Result<ExtremalEta> {
    let ts = h.ts.clone();
    if let Some(first_zero) = h.values.iter().position(|&v| v == 0.0) {
        // limiting convention: all capacity escapes through the zero
        let eta: Vec<f64> =
            (0..ts.len()).map(|i| if i < first_zero.max(1) { 0.0 } else { 1.0 }).collect();
        return Ok(ExtremalEta { ts, eta, capacity: 0.0, degenerate: true });
    }
    let mut cum = Vec::with_capacity(ts.len());
    let mut acc = 0.0;
    cum.push(0.0);
    for i in 1..ts.len() {
        acc += 0.5 * (1.0 / h.values[i - 1] + 1.0 / h.values[i]) * (ts[i] - ts[i - 1]);
        cum.push(acc);
    }
    let total = acc;
    if !(total > 0.0) {
        return Err(Error::Degenerate("weight profile has no reciprocal mass".to_string()));
    }
    let eta: Vec<f64> = cum.iter().map(|c| c / total).collect();
    Ok(ExtremalEta { ts, eta, capacity: 1.0 / total, degenerate: false })
}

/// Discrete cutoff energy `integral of eta'^2 H dt` with the
/// harmonic-mean midpoint rule. With this quadrature the extremal
/// cutoff's energy equals the capacity identically and every competitor
/// with the same endpoint values is at least the capacity, by the
/// discrete Cauchy-Schwarz inequality.
pub fn cutoff_energy(h: &WeightProfile, eta: &[f64]) -> Result<f64> {
    if eta.len() != h.ts.len() {
        return Err(Error::domain("cutoff profile length mismatch".to_string()));
    }
    if eta[0].abs() > 1e-9 || (eta[eta.len() - 1] - 1.0).abs() > 1e-9 {
        return Err(Error::domain("cutoff must run from 0 to 1".to_string()));
    }
    let mut acc = 0.0;
    for i in 1..eta.len() {
        let dt = h.ts[i] - h.ts[i - 1];
        let inv_mid = 0.5 * (1.0 / h.values[i - 1] + 1.0 / h.values[i]);
        let h_mid = 1.0 / inv_mid; // harmonic mean of the endpoints
        let de = eta[i] - eta[i - 1];
        if h_mid > 0.0 && h_mid.is_finite() {
            acc += de * de / dt * h_mid;
        }
    }
    Ok(acc)
}
