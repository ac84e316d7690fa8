//! The classical three-circles inequality for analytic functions,
//! checked by dense angular sampling of the maximum modulus.

use num_complex::Complex64;
use serde::Serialize;

use crate::{Error, Result};

/// A finite Laurent series `sum of c_m z^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaurentSeries {
    /// `(power, coefficient)` pairs; powers may repeat or be negative.
    pub terms: Vec<(i32, Complex64)>,
}

impl LaurentSeries {
    pub fn new(terms: Vec<(i32, Complex64)>) -> Self {
        LaurentSeries { terms }
    }

    /// Polynomial with `coeffs[j]` the coefficient of `z^j`.
    pub fn polynomial(coeffs: &[Complex64]) -> Self {
        LaurentSeries {
            terms: coeffs.iter().enumerate().map(|(j, &c)| (j as i32, c)).collect(),
        }
    }

    pub fn monomial(power: i32, coeff: Complex64) -> Self {
        LaurentSeries { terms: vec![(power, coeff)] }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|(_, c)| c.norm_sqr() == 0.0)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(m, c) in &self.terms {
            acc += c * z.powi(m);
        }
        acc
    }
}

/// Maximum modulus on the circle `|z| = r`, sampled at `density`
/// uniform angles.
pub fn sphere_max_modulus(f: &LaurentSeries, r: f64, density: usize) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::domain(format!("radius must be positive (got {r})")));
    }
    if density < 8 {
        return Err(Error::domain("angular density must be at least 8".to_string()));
    }
    let mut best = 0.0f64;
    for i in 0..density {
        let th = std::f64::consts::TAU * i as f64 / density as f64;
        let z = Complex64::from_polar(r, th);
        best = best.max(f.eval(z).norm());
    }
    Ok(best)
}

/// Outcome of one three-circles check.
#[derive(Debug, Clone, Serialize)]
pub struct HadamardCheck {
    pub radii: (f64, f64, f64),
    pub maxima: (f64, f64, f64),
    /// `log M(r1) log(r3/r2) + log M(r3) log(r2/r1) - log M(r2) log(r3/r1)`;
    /// nonnegative when the inequality holds.
    pub log_gap: f64,
    /// The same gap per unit of `log(r3/r1)`: the convexity gap of
    /// `log M(e^s)` at the sampled triple.
    pub convexity_gap: f64,
    pub scale: f64,
    pub density: usize,
    pub pass: bool,
}

/// Relative slack granted to roundoff in the log-form comparison.
pub const LOG_SLACK: f64 = 1e-10;

/// Checks `M(r2)^log(r3/r1) <= M(r1)^log(r3/r2) * M(r3)^log(r2/r1)` in
/// logarithmic form with slack `1e-10 * scale`.
pub fn hadamard_classical_check(
    f: &LaurentSeries,
    r1: f64,
    r2: f64,
    r3: f64,
    density: usize,
) -> Result<HadamardCheck> {
    if !(0.0 < r1 && r1 < r2 && r2 < r3) {
        return Err(Error::domain(format!(
            "radii must satisfy 0 < r1 < r2 < r3 (got {r1}, {r2}, {r3})"
        )));
    }
    if f.is_zero() {
        return Err(Error::Degenerate("maximum modulus undefined for the zero function".to_string()));
    }
    let m1 = sphere_max_modulus(f, r1, density)?;
    let m2 = sphere_max_modulus(f, r2, density)?;
    let m3 = sphere_max_modulus(f, r3, density)?;
    if m1 == 0.0 || m2 == 0.0 || m3 == 0.0 {
        return Err(Error::Degenerate(
            "some sampled maximum vanished; function is numerically zero on a circle".to_string(),
        ));
    }
    let (l1, l2, l3) = (m1.ln(), m2.ln(), m3.ln());
    let w13 = (r3 / r1).ln();
    let w23 = (r3 / r2).ln();
    let w12 = (r2 / r1).ln();
    let log_gap = l1 * w23 + l3 * w12 - l2 * w13;
    let scale = (l1.abs() * w23 + l3.abs() * w12 + l2.abs() * w13).max(1.0);
    Ok(HadamardCheck {
        radii: (r1, r2, r3),
        maxima: (m1, m2, m3),
        log_gap,
        convexity_gap: log_gap / w13,
        scale,
        density,
        pass: log_gap >= -LOG_SLACK * scale,
    })
}
