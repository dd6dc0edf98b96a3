//! Globally adaptive 7/15-point Gauss–Kronrod quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Default cap on integrand evaluations.
pub const DEFAULT_EVAL_BUDGET: usize = 1 << 20;

// Kronrod abscissae (descending) and weights; odd indices are the Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub evaluations: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    // round-off floor
    err = err.max(2.0 * f64::EPSILON * res_abs);
    (value, err)
}

fn adaptive_finite<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    budget: usize,
) -> Result<QuadratureResult> {
    if a == b {
        return Ok(QuadratureResult {
            value: 0.0,
            abs_error_estimate: 0.0,
            evaluations: 0,
        });
    }
    let (value, error) = kronrod15(f, a, b);
    let mut evaluations = 15;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    loop {
        if !total.is_finite() {
            return Err(Error::Quadrature {
                value: total,
                error: total_err,
                evaluations,
            });
        }
        if total_err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        if evaluations + 30 > budget {
            return Err(Error::Quadrature {
                value: total,
                error: total_err,
                evaluations,
            });
        }
        let seg = heap.pop().expect("heap is never empty");
        if seg.error == 0.0 {
            heap.push(seg);
            break;
        }
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a.min(seg.b) || mid >= seg.a.max(seg.b) {
            // interval exhausted at double resolution; accept as is
            heap.push(Segment { error: 0.0, ..seg });
            total_err -= seg.error;
            continue;
        }
        let (v1, e1) = kronrod15(f, seg.a, mid);
        let (v2, e2) = kronrod15(f, mid, seg.b);
        evaluations += 30;
        total += v1 + v2 - seg.value;
        total_err += e1 + e2 - seg.error;
        heap.push(Segment {
            a: seg.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: seg.b,
            value: v2,
            error: e2,
        });
        // refresh sums periodically to avoid drift
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
    let value: f64 = heap.iter().map(|s| s.value).sum();
    let err: f64 = heap.iter().map(|s| s.error).sum();
    Ok(QuadratureResult {
        value,
        abs_error_estimate: err.max(0.0),
        evaluations,
    })
}

/// Integrates `f` over `[a, b]`, where either endpoint may be infinite.
///
/// Infinite ranges are mapped to finite ones through `x = t / (1 - t^2)`
/// (or its one-sided analogue anchored at the finite endpoint).
pub fn integrate_adaptive<F>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<QuadratureResult>
where
    F: Fn(f64) -> f64,
{
    integrate_with_budget(f, a, b, rel_tol, abs_tol, DEFAULT_EVAL_BUDGET)
}

pub fn integrate_with_budget<F>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    budget: usize,
) -> Result<QuadratureResult>
where
    F: Fn(f64) -> f64,
{
    if a.is_nan() || b.is_nan() {
        return Err(Error::Domain("integration limits must not be NaN".into()));
    }
    if a > b {
        let r = integrate_with_budget(f, b, a, rel_tol, abs_tol, budget)?;
        return Ok(QuadratureResult { value: -r.value, ..r });
    }
    let guard = |v: f64| if v.is_finite() { v } else { 0.0 };
    match (a.is_finite(), b.is_finite()) {
        (true, true) => adaptive_finite(&f, a, b, rel_tol, abs_tol, budget),
        (false, false) => {
            let g = |t: f64| {
                let d = 1.0 - t * t;
                let x = t / d;
                guard(f(x) * (1.0 + t * t) / (d * d))
            };
            adaptive_finite(&g, -1.0, 1.0, rel_tol, abs_tol, budget)
        }
        (true, false) => {
            let g = |t: f64| {
                let d = 1.0 - t * t;
                let x = a + t / d;
                guard(f(x) * (1.0 + t * t) / (d * d))
            };
            adaptive_finite(&g, 0.0, 1.0, rel_tol, abs_tol, budget)
        }
        (false, true) => {
            let g = |t: f64| {
                let d = 1.0 - t * t;
                let x = b - t / d;
                guard(f(x) * (1.0 + t * t) / (d * d))
            };
            adaptive_finite(&g, 0.0, 1.0, rel_tol, abs_tol, budget)
        }
    }
}

/// Integrates over `[points[0], points[last]]` split at the interior
/// breakpoints (kinks, peaks), sharing the absolute tolerance between pieces.
pub fn integrate_pieces<F>(f: F, points: &[f64], rel_tol: f64, abs_tol: f64) -> Result<QuadratureResult>
where
    F: Fn(f64) -> f64,
{
    let mut out = QuadratureResult {
        value: 0.0,
        abs_error_estimate: 0.0,
        evaluations: 0,
    };
    let pieces = points.len().saturating_sub(1).max(1) as f64;
    for w in points.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let r = integrate_adaptive(&f, w[0], w[1], rel_tol, abs_tol / pieces)?;
        out.value += r.value;
        out.abs_error_estimate += r.abs_error_estimate;
        out.evaluations += r.evaluations;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::special::std_normal_pdf;

    #[test]
    fn constants_and_polynomials_exact() {
        let r = integrate_adaptive(|_| 1.0, 0.0, 1.0, 1e-12, 1e-14).unwrap();
        assert!((r.value - 1.0).abs() < 1e-15);
        assert!(r.abs_error_estimate <= 1e-14);
        let r = integrate_adaptive(|x| x.powi(9) - 3.0 * x * x, -1.0, 2.0, 1e-12, 1e-14).unwrap();
        let exact = (2f64.powi(10) - 1.0) / 10.0 - (8.0 + 1.0);
        assert!((r.value - exact).abs() < 1e-12);
        assert!(r.abs_error_estimate <= 1e-14 * r.value.abs().max(1.0));
    }

    #[test]
    fn infinite_ranges() {
        let r = integrate_adaptive(std_normal_pdf, f64::NEG_INFINITY, f64::INFINITY, 1e-12, 1e-13).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
        let r = integrate_adaptive(|t| (-t).exp(), 0.0, f64::INFINITY, 1e-12, 1e-13).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
        let r = integrate_adaptive(|t| t.exp(), f64::NEG_INFINITY, 0.0, 1e-12, 1e-13).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn reversed_limits_negate() {
        let r = integrate_adaptive(|x| x, 1.0, 0.0, 1e-12, 1e-14).unwrap();
        assert!((r.value + 0.5).abs() < 1e-15);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let r = integrate_with_budget(|x| (1.0 / x).sin() / x, 1e-9, 1.0, 1e-14, 0.0, 200);
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }
}
