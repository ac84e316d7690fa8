//! Elementary inequalities between power means of gradient magnitudes,
//! with the tight constants that make them sharp, and the resulting
//! two-sided envelope for the line integral
//! `I(p) = integral over [0,1] of |lam*a' + (1-lam)*b'|^(p-2) dlam`.
//!
//! Everything here is scalar arithmetic on `(a, b, p)` triples; the
//! ratio functions `g1, g2, g3` control the quotients
//!
//! ```text
//! g1 = [(a^(p-1)+b^(p-1))/(a+b)] / [(a^(p-1)-b^(p-1))/(a-b)]
//! g2 = [(a^(p-1)-b^(p-1))/(a-b)] / (a^(p-2)+b^(p-2))
//! g3 = [(a^(p-1)-b^(p-1))/(a-b)] * (a^(2-p)+b^(2-p))
//! ```
//!
//! written in terms of `x = a/b > 1`. Their ranges are open intervals
//! pinched at `1` for the exponents 2, 3 and 3/2 respectively.

use serde::Serialize;

use crate::solver::powq;
use crate::{Error, Result};

fn check_xp(x: f64, p: f64) -> Result<()> {
    if !(x > 1.0) {
        return Err(Error::domain(format!("ratio x={x} must exceed 1")));
    }
    if !(p > 1.0) {
        return Err(Error::domain(format!("exponent p={p} must exceed 1")));
    }
    Ok(())
}

/// `x^(p-1) - 1` without cancellation near `x = 1`.
#[inline]
fn pow_m1(x: f64, e: f64) -> f64 {
    (e * (x - 1.0).ln_1p()).exp_m1()
}

/// Ratio of the sum quotient to the difference quotient.
pub fn g1(x: f64, p: f64) -> Result<f64> {
    check_xp(x, p)?;
    let w = pow_m1(x, p - 1.0);
    Ok((w + 2.0) * (x - 1.0) / (w * (x + 1.0)))
}

/// Difference quotient against the power sum `x^(p-2) + 1`.
///
/// Pinched between `1` and `(p-1)/2` for `p >= 2`, the regime where
/// the power-sum bound is used; for `p < 2` it decays to zero at
/// infinity and the inverse-power form [`g3`] takes over.
pub fn g2(x: f64, p: f64) -> Result<f64> {
    check_xp(x, p)?;
    let w = pow_m1(x, p - 1.0);
    Ok(w / ((x - 1.0) * (x.powf(p - 2.0) + 1.0)))
}

/// Difference quotient times the inverse-power sum `x^(2-p) + 1`.
///
/// Pinched between `1` and `2(p-1)` for `p <= 2`; for `p > 2` it grows
/// like `x^(p-2)` and the power-sum form [`g2`] takes over.
pub fn g3(x: f64, p: f64) -> Result<f64> {
    check_xp(x, p)?;
    let w = pow_m1(x, p - 1.0);
    Ok(w * (x.powf(2.0 - p) + 1.0) / (x - 1.0))
}

/// Which difference-quotient bound applies: the power-sum form for
/// `p >= 2` or the inverse-power-sum form for `p < 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum QuotientBranch {
    PowerSum,
    InversePowerSum,
}

/// Tight constants for the sampled inequalities at a fixed exponent.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TightConstants {
    pub p: f64,
    /// Sharp bounds of `g1`: `c1 <= g1 <= c2`.
    pub c1: f64,
    pub c2: f64,
    /// Sharp bounds of `g2` (for `p >= 2`) or `g3` (for `p < 2`).
    pub c3: f64,
    pub c4: f64,
    pub branch: QuotientBranch,
    /// `1 + |p - 2|`: flux difference against gradient difference.
    pub c5: f64,
    /// `2 c5 / min(1, p-1)`.
    pub c6: f64,
    /// Branch-wise envelope constants for `I(p)`; see [`i_p_bounds`].
    pub c7: f64,
    pub c8: f64,
    /// `c9 = min(c7, 1/c8)`, `c10 = max(1/c7, c8)`.
    pub c9: f64,
    pub c10: f64,
}

/// Computes the tight constants at exponent `p`.
pub fn tight_constants(p: f64) -> Result<TightConstants> {
    if !(p > 1.0) {
        return Err(Error::domain(format!("exponent p={p} must exceed 1")));
    }
    let inv = 1.0 / (p - 1.0);
    let c1 = inv.min(1.0);
    let c2 = inv.max(1.0);
    let (c3, c4, branch) = if p >= 2.0 {
        let half = 0.5 * (p - 1.0);
        (half.min(1.0), half.max(1.0), QuotientBranch::PowerSum)
    } else {
        let twice = 2.0 * (p - 1.0);
        (twice.min(1.0), twice.max(1.0), QuotientBranch::InversePowerSum)
    };
    let c5 = 1.0 + (p - 2.0).abs();
    let c6 = 2.0 * c5 / 1.0f64.min(p - 1.0);
    // Composition of the envelope for I = int_0^1 (lam*a + (1-lam)*b)^(p-2) dlam,
    // a >= b > 0. Integrating the two extreme alignments of the segment
    // exactly gives, for p >= 2,
    //   (a^(p-1)+b^(p-1)) / ((p-1)(a+b)) <= I <= (a^(p-1)-b^(p-1)) / ((p-1)(a-b)),
    // and the reversed bounds for p < 2. Dividing through by the
    // difference quotient and applying the sharp g-bounds yields
    //   p >= 2:  c1*c3/(p-1) * (a^(p-2)+b^(p-2))    <= I <= c4/(p-1) * (a^(p-2)+b^(p-2))
    //   p <  2:  c3/(p-1)    / (a^(2-p)+b^(2-p))    <= I <= c2*c4/(p-1) / (a^(2-p)+b^(2-p))
    let (c7, c8) = if p >= 2.0 {
        (c1 * c3 / (p - 1.0), c4 / (p - 1.0))
    } else {
        (c3 / (p - 1.0), c2 * c4 / (p - 1.0))
    };
    let c9 = c7.min(1.0 / c8);
    let c10 = (1.0 / c7).max(c8);
    Ok(TightConstants { p, c1, c2, c3, c4, branch, c5, c6, c7, c8, c9, c10 })
}

/// `(a^(p-1) - b^(p-1)) / (a - b)`, stable when `a` is close to `b`.
pub fn difference_quotient(a: f64, b: f64, p: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    // keep one delta through both the exponential and the division;
    // rebuilding 1 + delta would throw away eight digits of it
    let delta = (hi - lo) / lo;
    powq(lo, p - 2.0) * ((p - 1.0) * delta.ln_1p()).exp_m1() / delta
}

/// Margins of the two sampled inequalities at one `(a, b, p)` triple.
/// Symmetric in `a` and `b`; both must be positive and distinct.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SampleVerdict {
    /// `(mid - c1*dq, c2*dq - mid)` where `mid = (a^(p-1)+b^(p-1))/(a+b)`.
    pub ratio_margins: (f64, f64),
    pub ratio_scale: f64,
    /// Margins of the difference quotient against the branch bound.
    pub quotient_margins: (f64, f64),
    pub quotient_scale: f64,
    pub pass: bool,
}

/// Relative slack granted to roundoff when judging a sample.
pub const SAMPLE_SLACK: f64 = 1e-12;

/// Evaluates both inequalities with tight constants at one sample.
pub fn verify_sample(a: f64, b: f64, p: f64) -> Result<SampleVerdict> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::domain("both arguments must be positive".to_string()));
    }
    if a == b {
        return Err(Error::domain("arguments must be distinct".to_string()));
    }
    let tc = tight_constants(p)?;
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    let dq = difference_quotient(hi, lo, p);
    let mid = (powq(hi, p - 1.0) + powq(lo, p - 1.0)) / (hi + lo);
    let ratio_margins = (mid - tc.c1 * dq, tc.c2 * dq - mid);
    let ratio_scale = mid.max(tc.c2 * dq);

    let (quotient_margins, quotient_scale) = match tc.branch {
        QuotientBranch::PowerSum => {
            let s = powq(hi, p - 2.0) + powq(lo, p - 2.0);
            ((dq - tc.c3 * s, tc.c4 * s - dq), dq.max(tc.c4 * s))
        }
        QuotientBranch::InversePowerSum => {
            let s = powq(hi, 2.0 - p) + powq(lo, 2.0 - p);
            ((dq - tc.c3 / s, tc.c4 / s - dq), dq.max(tc.c4 / s))
        }
    };
    let pass = ratio_margins.0 >= -SAMPLE_SLACK * ratio_scale
        && ratio_margins.1 >= -SAMPLE_SLACK * ratio_scale
        && quotient_margins.0 >= -SAMPLE_SLACK * quotient_scale
        && quotient_margins.1 >= -SAMPLE_SLACK * quotient_scale;
    Ok(SampleVerdict { ratio_margins, ratio_scale, quotient_margins, quotient_scale, pass })
}

/// Two-sided envelope for `I(p)` in terms of the gradient magnitudes:
/// `c9 * s <= I <= c10 * s` with `s = gv^|p-2| + gu^|p-2|` for `p >= 2`
/// and `s` replaced by its reciprocal for `p < 2`.
pub fn i_p_bounds(gv: f64, gu: f64, p: f64) -> Result<(f64, f64)> {
    if !(gv >= 0.0 && gu >= 0.0) {
        return Err(Error::domain("gradient magnitudes must be nonnegative".to_string()));
    }
    if p < 2.0 && gv == 0.0 && gu == 0.0 {
        return Err(Error::Singular(
            "I(p) diverges for p < 2 when both gradients vanish".to_string(),
        ));
    }
    let tc = tight_constants(p)?;
    let e = (p - 2.0).abs();
    let s = powq(gv * gv, e / 2.0) + powq(gu * gu, e / 2.0);
    if p >= 2.0 {
        Ok((tc.c9 * s, tc.c10 * s))
    } else {
        Ok((tc.c9 / s, tc.c10 / s))
    }
}

/// Independent quadrature of `I(p)` for collinear gradients of
/// magnitudes `gv`, `gu`. With `opposed` the vectors point opposite
/// ways, which is only supported for `p >= 2` (the integrand is then
/// continuous).
pub fn i_p_quadrature(gv: f64, gu: f64, p: f64, opposed: bool) -> Result<f64> {
    if !(gv >= 0.0 && gu >= 0.0) {
        return Err(Error::domain("gradient magnitudes must be nonnegative".to_string()));
    }
    if p < 2.0 && gv == 0.0 && gu == 0.0 {
        return Err(Error::Singular(
            "I(p) diverges for p < 2 when both gradients vanish".to_string(),
        ));
    }
    if opposed && p < 2.0 {
        return Err(Error::Singular(
            "opposed quadrature is restricted to p >= 2".to_string(),
        ));
    }
    let e = p - 2.0;
    let f = move |lam: f64| -> f64 {
        let m = if opposed { lam * gv - (1.0 - lam) * gu } else { lam * gv + (1.0 - lam) * gu };
        let m2 = m * m;
        if m2 == 0.0 {
            if e > 0.0 {
                0.0
            } else if e == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            powq(m2, e / 2.0)
        }
    };
    Ok(adaptive_simpson(&f, 0.0, 1.0, 1e-11, 48))
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    fn clip(v: f64) -> f64 {
        // integrable endpoint singularities get a huge finite stand-in;
        // the subdivision then resolves them to the requested tolerance
        if v.is_finite() {
            v
        } else {
            f64::MAX.sqrt()
        }
    }
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = clip(f(m));
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
        }
    }
    let fa = clip(f(a));
    let fb = clip(f(b));
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    let scale = whole.abs().max(1.0);
    recurse(f, a, fa, b, fb, whole, m, fm, tol * scale, depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn g_functions_at_pinched_exponents() {
        for x in [1.0 + 1e-9, 1.5, 7.0, 1e6] {
            assert!((g1(x, 2.0).unwrap() - 1.0).abs() < 1e-12, "g1 at x={x}");
            assert!((g2(x, 3.0).unwrap() - 1.0).abs() < 1e-12, "g2 at x={x}");
            assert!((g3(x, 1.5).unwrap() - 1.0).abs() < 1e-12, "g3 at x={x}");
        }
    }

    #[test]
    fn g_function_limits() {
        // each far sample sits where the convergence rate (a power of
        // x with exponent controlled by p) reaches the tolerance
        let near = 1.0 + 1e-8;
        for p in [1.8, 2.5, 3.0, 5.0] {
            assert!((g1(near, p).unwrap() - 1.0 / (p - 1.0)).abs() < 1e-5, "g1 near, p={p}");
            assert!((g1(1e8, p).unwrap() - 1.0).abs() < 1e-5, "g1 far, p={p}");
            assert!((g2(near, p).unwrap() - (p - 1.0) / 2.0).abs() < 1e-5, "g2 near, p={p}");
            assert!((g3(near, p).unwrap() - 2.0 * (p - 1.0)).abs() < 1e-5, "g3 near, p={p}");
        }
        for p in [2.8, 3.5, 5.0] {
            assert!((g2(1e8, p).unwrap() - 1.0).abs() < 1e-5, "g2 far, p={p}");
        }
        for p in [1.48, 1.52] {
            assert!((g3(1e12, p).unwrap() - 1.0).abs() < 1e-5, "g3 far, p={p}");
        }
    }

    #[test]
    fn g_functions_stay_inside_their_intervals() {
        // g1 on all p > 1; g2 and g3 each on the branch that uses them
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let tol = 1e-12;
        for _ in 0..20_000 {
            let x = 1.0 + 10f64.powf(rng.gen_range(-7.0..7.0));
            let p: f64 = rng.gen_range(1.01..10.0);
            let v1 = g1(x, p).unwrap();
            let (lo1, hi1) = (1.0f64.min(1.0 / (p - 1.0)), 1.0f64.max(1.0 / (p - 1.0)));
            assert!(v1 >= lo1 - tol && v1 <= hi1 + tol, "g1({x},{p})={v1}");

            let p2 = rng.gen_range(2.0..10.0);
            let v2 = g2(x, p2).unwrap();
            let (lo2, hi2) = (1.0f64.min((p2 - 1.0) / 2.0), 1.0f64.max((p2 - 1.0) / 2.0));
            assert!(v2 >= lo2 - tol && v2 <= hi2 + tol, "g2({x},{p2})={v2}");

            let p3 = rng.gen_range(1.01..2.0);
            let v3 = g3(x, p3).unwrap();
            let (lo3, hi3) = (1.0f64.min(2.0 * (p3 - 1.0)), 1.0f64.max(2.0 * (p3 - 1.0)));
            assert!(v3 >= lo3 - tol && v3 <= hi3 + tol, "g3({x},{p3})={v3}");
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(g1(1.0, 2.0).is_err());
        assert!(g2(0.5, 2.0).is_err());
        assert!(g3(2.0, 1.0).is_err());
        assert!(tight_constants(1.0).is_err());
        assert!(verify_sample(1.0, 1.0, 2.0).is_err());
        assert!(verify_sample(-1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn constants_at_special_exponents() {
        let t2 = tight_constants(2.0).unwrap();
        assert_eq!((t2.c1, t2.c2), (1.0, 1.0));
        let t3 = tight_constants(3.0).unwrap();
        assert_eq!(t3.branch, QuotientBranch::PowerSum);
        assert_eq!((t3.c3, t3.c4), (1.0, 1.0));
        let t32 = tight_constants(1.5).unwrap();
        assert_eq!(t32.branch, QuotientBranch::InversePowerSum);
        assert_eq!((t32.c3, t32.c4), (1.0, 1.0));
        assert!((t3.c5 - 2.0).abs() < 1e-15);
        assert!((t3.c6 - 4.0).abs() < 1e-15);
    }

    #[test]
    fn constants_are_ordered_across_p() {
        for i in 0..2000 {
            let p = 1.001 + 9.0 * (i as f64 / 2000.0);
            let tc = tight_constants(p).unwrap();
            assert!(tc.c1 > 0.0 && tc.c1 <= tc.c2);
            assert!(tc.c3 > 0.0 && tc.c3 <= tc.c4);
            assert!(tc.c7 > 0.0 && tc.c7 <= tc.c8 * (1.0 + 1e-15));
            assert!(tc.c9 > 0.0 && tc.c9 <= tc.c10);
            assert!(tc.c5 >= 1.0 && tc.c6 >= 2.0);
        }
    }

    #[test]
    fn sample_equality_at_p_two() {
        let v = verify_sample(2.0, 1.0, 2.0).unwrap();
        // both quotients collapse to 1
        assert!(v.ratio_margins.0.abs() < 1e-14 && v.ratio_margins.1.abs() < 1e-14);
        assert!(v.pass);
    }

    #[test]
    fn sample_near_coincident_arguments() {
        // difference quotient approaches (p-1) b^(p-2)
        let b = 0.37;
        let a = b * (1.0 + 1e-8);
        let dq = difference_quotient(a, b, 3.0);
        assert!(((dq - 2.0 * b) / (2.0 * b)).abs() < 1e-7);
        let v = verify_sample(a, b, 3.0).unwrap();
        assert!(v.pass);
    }

    #[test]
    fn sample_is_symmetric_in_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a = 10f64.powf(rng.gen_range(-3.0..3.0));
            let b = 10f64.powf(rng.gen_range(-3.0..3.0));
            if a == b {
                continue;
            }
            let p = rng.gen_range(1.01..10.0);
            let u = verify_sample(a, b, p).unwrap();
            let w = verify_sample(b, a, p).unwrap();
            assert_eq!(u.ratio_margins, w.ratio_margins);
            assert_eq!(u.quotient_margins, w.quotient_margins);
        }
    }

    #[test]
    fn random_samples_have_no_violations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..20_000 {
            let a = 10f64.powf(rng.gen_range(-3.0..3.0));
            let b = 10f64.powf(rng.gen_range(-3.0..3.0));
            if a == b {
                continue;
            }
            let p = rng.gen_range(1.01..10.0);
            let v = verify_sample(a, b, p).unwrap();
            assert!(v.pass, "violation at a={a}, b={b}, p={p}: {v:?}");
        }
    }

    #[test]
    fn envelope_examples() {
        // exponent zero: I = 1
        let (lo, hi) = i_p_bounds(0.3, 5.0, 2.0).unwrap();
        assert!(lo <= 1.0 + 1e-15 && 1.0 <= hi);
        let i = i_p_quadrature(0.3, 5.0, 2.0, false).unwrap();
        assert!((i - 1.0).abs() < 1e-12);

        // I = integral of lam dlam = 1/2
        let i = i_p_quadrature(1.0, 0.0, 3.0, false).unwrap();
        assert!((i - 0.5).abs() < 1e-10);
        let (lo, hi) = i_p_bounds(1.0, 0.0, 3.0).unwrap();
        assert!(lo <= i && i <= hi);

        // equal aligned gradients: constant integrand
        for p in [1.5, 2.0, 3.0, 7.0] {
            let i = i_p_quadrature(1.0, 1.0, p, false).unwrap();
            assert!((i - 1.0).abs() < 1e-9, "p={p}: {i}");
            let (lo, hi) = i_p_bounds(1.0, 1.0, p).unwrap();
            assert!(lo <= i + 1e-9 && i <= hi + 1e-9, "p={p}: [{lo}, {hi}] vs {i}");
        }

        assert!(i_p_bounds(0.0, 0.0, 1.5).is_err());
        assert!(i_p_quadrature(0.0, 0.0, 1.5, false).is_err());
    }

    #[test]
    fn envelope_contains_quadrature_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..2000 {
            let gv = 10f64.powf(rng.gen_range(-2.0..2.0));
            let gu = 10f64.powf(rng.gen_range(-2.0..2.0));
            let p = rng.gen_range(1.05..10.0);
            let i = i_p_quadrature(gv, gu, p, false).unwrap();
            let (lo, hi) = i_p_bounds(gv, gu, p).unwrap();
            let slack = 1e-9 * i.abs().max(hi.abs());
            assert!(
                lo - slack <= i && i <= hi + slack,
                "gv={gv} gu={gu} p={p}: I={i} outside [{lo}, {hi}]"
            );
        }
    }

    #[test]
    fn opposed_quadrature_matches_closed_form() {
        // opposite alignment integrates to (a^(p-1)+b^(p-1)) / ((p-1)(a+b))
        let (a, b, p) = (2.0, 0.7, 3.5);
        let i = i_p_quadrature(a, b, p, true).unwrap();
        let expect = (a.powf(p - 1.0) + b.powf(p - 1.0)) / ((p - 1.0) * (a + b));
        assert!(((i - expect) / expect).abs() < 1e-8, "{i} vs {expect}");
        assert!(i_p_quadrature(1.0, 1.0, 1.5, true).is_err());
    }
}
