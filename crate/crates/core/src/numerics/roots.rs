//! Bracketing root finders and a golden-section minimizer.

use crate::error::{Error, Result};

const MAX_BISECT_ITER: usize = 400;

/// Bisection on a bracket `[a, b]` with `f(a) f(b) <= 0`.
///
/// Stops once `|f(x)| <= tol` or the bracket is narrower than `tol * max(1, |x|)`.
pub fn find_root_bisect<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return Err(Error::Bracket {
            a: lo,
            b: hi,
            fa: flo,
            fb: fhi,
        });
    }
    for _ in 0..MAX_BISECT_ITER {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() <= tol || (hi - lo) <= tol * mid.abs().max(1.0) {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if mid == lo && mid == hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Safeguarded Newton iteration for a monotone `f` on `[lo, hi]` with a sign
/// change; `fdf` returns `(f(x), f'(x))`. Falls back to bisection whenever a
/// Newton step leaves the bracket or stalls.
pub(crate) fn newton_bracketed<F>(fdf: F, mut lo: f64, mut hi: f64, x0: f64) -> f64
where
    F: Fn(f64) -> (f64, f64),
{
    let (flo, _) = fdf(lo);
    let increasing = flo < 0.0;
    let mut x = if x0 > lo && x0 < hi { x0 } else { 0.5 * (lo + hi) };
    for _ in 0..200 {
        let (fx, dfx) = fdf(x);
        if fx == 0.0 {
            return x;
        }
        if (fx < 0.0) == increasing {
            lo = x;
        } else {
            hi = x;
        }
        let mut next = x - fx / dfx;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 2.0 * f64::EPSILON * x.abs().max(1e-300) || hi - lo <= 2.0 * f64::EPSILON * x.abs() {
            return next;
        }
        x = next;
    }
    x
}

/// Golden-section search for a minimum of a unimodal `f` on `[a, b]`.
/// Returns `(argmin, min)`.
pub fn minimize_golden<F>(f: F, a: f64, b: f64, tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = if a <= b { (a, b) } else { (b, a) };
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let fa = f(a);
    let fb = f(b);
    let mut best = if fc < fd { (c, fc) } else { (d, fd) };
    if fa < best.1 {
        best = (a, fa);
    }
    if fb < best.1 {
        best = (b, fb);
    }
    best
}
