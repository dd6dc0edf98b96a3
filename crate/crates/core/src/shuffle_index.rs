//! Shuffle indices `χ_lo`, `χ_up` and the tightness check.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::{LocalRandomizer, ReferenceDistribution, MOMENT_REL_TOL};
use crate::numerics::roots::minimize_golden;

/// Points per axis of the coarse pair / reference grids.
pub const SEARCH_GRID: usize = 21;
/// Input-space tolerance of the golden-section refinement.
pub const SEARCH_TOL: f64 = 1e-6;
const TIGHTNESS_POINTS: usize = 1000;
const TIGHTNESS_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShuffleIndices {
    pub chi_lo: f64,
    pub chi_up: f64,
    pub pair_lo: (f64, f64),
    pub pair_up: (f64, f64),
    /// Input whose output law attains the inner infimum of `χ_up`.
    pub ref_up: f64,
    pub tight: bool,
}

impl ShuffleIndices {
    pub fn ratio(&self) -> f64 {
        self.chi_lo / self.chi_up
    }
}

/// Tuning of the index searches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexOptions {
    pub rel_tol: f64,
    pub grid: usize,
}

impl Default for IndexOptions {
    fn default() -> Self {
        Self {
            rel_tol: MOMENT_REL_TOL,
            grid: SEARCH_GRID,
        }
    }
}

/// `χ_lo(x1, x1') = sqrt(γ / Var_BG(l_0))`.
pub fn chi_lo_pair(mech: &LocalRandomizer, x1: f64, x1p: f64) -> Result<f64> {
    chi_lo_pair_with(mech, x1, x1p, &IndexOptions::default())
}

pub fn chi_lo_pair_with(mech: &LocalRandomizer, x1: f64, x1p: f64, opts: &IndexOptions) -> Result<f64> {
    let v = mech.variance_l0_tol(x1, x1p, ReferenceDistribution::Blanket, opts.rel_tol)?;
    Ok((mech.blanket_mass() / v).sqrt())
}

fn local_variance(mech: &LocalRandomizer, x1: f64, x1p: f64, x: f64, rel_tol: f64) -> Result<f64> {
    mech.variance_l0_tol(x1, x1p, ReferenceDistribution::Local(x), rel_tol)
}

/// `χ_up(x1, x1') = inf_x sqrt(1 / Var_{R_x}(l_0))` and the attaining `x`.
pub fn chi_up_pair(mech: &LocalRandomizer, x1: f64, x1p: f64) -> Result<(f64, f64)> {
    chi_up_pair_with(mech, x1, x1p, &IndexOptions::default())
}

pub fn chi_up_pair_with(mech: &LocalRandomizer, x1: f64, x1p: f64, opts: &IndexOptions) -> Result<(f64, f64)> {
    match *mech {
        LocalRandomizer::Krr { k, .. } => {
            // exact enumeration; ties resolve to the smallest symbol
            let mut best = (f64::NEG_INFINITY, 0.0);
            for x in 1..=k {
                let v = local_variance(mech, x1, x1p, x as f64, opts.rel_tol)?;
                if v > best.0 * (1.0 + 1e-14) {
                    best = (v, x as f64);
                }
            }
            Ok((1.0 / best.0.sqrt(), best.1))
        }
        LocalRandomizer::GenGaussian { domain, .. } => {
            let (lo, hi) = (domain[0], domain[1]);
            let n = opts.grid.max(2);
            let step = (hi - lo) / (n - 1) as f64;
            let vars: Vec<Result<f64>> = (0..n)
                .into_par_iter()
                .map(|i| local_variance(mech, x1, x1p, lo + step * i as f64, opts.rel_tol))
                .collect();
            let vars: Vec<f64> = vars.into_iter().collect::<Result<_>>()?;
            let (imax, _) = vars
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("non-empty grid");
            let a = lo + step * imax.saturating_sub(1) as f64;
            let b = (lo + step * (imax + 1) as f64).min(hi);
            // maximize the variance; the reference is clamped to the domain
            let (x, neg) = minimize_golden(
                |x| {
                    let x = x.clamp(lo, hi);
                    local_variance(mech, x1, x1p, x, opts.rel_tol)
                        .map(|v| -v)
                        .unwrap_or(f64::INFINITY)
                },
                a,
                b,
                SEARCH_TOL,
            );
            let (x, v) = if -neg >= vars[imax] {
                (x.clamp(lo, hi), -neg)
            } else {
                (lo + step * imax as f64, vars[imax])
            };
            if !v.is_finite() {
                return Err(Error::Optimizer {
                    best: v,
                    at: vec![x],
                    suggestion: (lo, hi),
                });
            }
            Ok((1.0 / v.sqrt(), x))
        }
    }
}

/// Worst-case (over pairs) indices plus the tightness flag.
pub fn worst_case_indices(mech: &LocalRandomizer) -> Result<ShuffleIndices> {
    worst_case_indices_with(mech, &IndexOptions::default())
}

pub fn worst_case_indices_with(mech: &LocalRandomizer, opts: &IndexOptions) -> Result<ShuffleIndices> {
    mech.validate()?;
    match *mech {
        LocalRandomizer::Krr { k, .. } => {
            // pair-independent by symmetry
            let pair = (1.0, 2.0);
            let chi_lo = chi_lo_pair_with(mech, pair.0, pair.1, opts)?;
            let (chi_up, x) = chi_up_pair_with(mech, pair.0, pair.1, opts)?;
            Ok(ShuffleIndices {
                chi_lo,
                chi_up,
                pair_lo: pair,
                pair_up: pair,
                ref_up: x,
                tight: k >= 3,
            })
        }
        LocalRandomizer::GenGaussian { domain, .. } => {
            let (pair_lo, chi_lo) = minimize_over_pairs(domain, opts, |a, b| chi_lo_pair_with(mech, a, b, opts))?;
            let (pair_up, chi_up) =
                minimize_over_pairs(domain, opts, |a, b| chi_up_pair_with(mech, a, b, opts).map(|r| r.0))?;
            let (_, ref_up) = chi_up_pair_with(mech, pair_up.0, pair_up.1, opts)?;
            let tight = blanket_matches(mech, ref_up);
            Ok(ShuffleIndices {
                chi_lo,
                chi_up,
                pair_lo,
                pair_up,
                ref_up,
                tight: tight && (chi_up - chi_lo).abs() <= TIGHTNESS_REL_TOL * chi_lo,
            })
        }
    }
}

/// Grid search over ordered pairs `x1 < x1'` followed by coordinate-wise
/// golden-section refinement. The objective is symmetric in the pair.
fn minimize_over_pairs<F>(domain: [f64; 2], opts: &IndexOptions, f: F) -> Result<((f64, f64), f64)>
where
    F: Fn(f64, f64) -> Result<f64> + Sync,
{
    let (lo, hi) = (domain[0], domain[1]);
    let n = opts.grid.max(2);
    let step = (hi - lo) / (n - 1) as f64;
    let pts: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let vals: Vec<Result<f64>> = pairs.par_iter().map(|&(i, j)| f(pts[i], pts[j])).collect();
    let mut best = (0usize, f64::INFINITY);
    for (idx, v) in vals.into_iter().enumerate() {
        let v = v?;
        if v < best.1 {
            best = (idx, v);
        }
    }
    let (bi, bj) = pairs[best.0];
    let mut x = (pts[bi], pts[bj]);
    let mut fx = best.1;
    let eval = |a: f64, b: f64| {
        if (b - a).abs() < SEARCH_TOL {
            f64::INFINITY
        } else {
            f(a.clamp(lo, hi), b.clamp(lo, hi)).unwrap_or(f64::INFINITY)
        }
    };
    for _ in 0..3 {
        let (a, va) = minimize_golden(|t| eval(t, x.1), (x.0 - step).max(lo), (x.0 + step).min(hi), SEARCH_TOL);
        if va < fx {
            x.0 = a;
            fx = va;
        }
        let (b, vb) = minimize_golden(|t| eval(x.0, t), (x.1 - step).max(lo), (x.1 + step).min(hi), SEARCH_TOL);
        if vb < fx {
            x.1 = b;
            fx = vb;
        }
    }
    if !fx.is_finite() {
        return Err(Error::Optimizer {
            best: fx,
            at: vec![x.0, x.1],
            suggestion: (lo - (hi - lo), hi + (hi - lo)),
        });
    }
    Ok((x, fx))
}

/// Whether `R_{x*}` coincides with `γ·R_BG` on a grid over the region
/// carrying the output mass (the disagreement set is all of it here).
fn blanket_matches(mech: &LocalRandomizer, x_star: f64) -> bool {
    let (lo, hi) = mech.domain();
    let scale = match *mech {
        LocalRandomizer::GenGaussian { scale, .. } => scale,
        LocalRandomizer::Krr { .. } => 1.0,
    };
    let gamma = mech.blanket_mass();
    let (a, b) = (lo - 5.0 * scale, hi + 5.0 * scale);
    (0..TIGHTNESS_POINTS).all(|i| {
        let y = a + (b - a) * (i as f64 + 0.5) / TIGHTNESS_POINTS as f64;
        let r = mech.density(x_star, y);
        (r - gamma * mech.blanket_density(y)).abs() <= TIGHTNESS_REL_TOL * r
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn krr_closed_forms() {
        let m = LocalRandomizer::krr(3, 2.0).unwrap();
        let e2 = 2f64.exp();
        let expect = ((e2 + 2.0) / (2.0 * (e2 - 1.0).powi(2))).sqrt();
        assert!((chi_lo_pair(&m, 1.0, 2.0).unwrap() - expect).abs() < 1e-12);
        let (up, x) = chi_up_pair(&m, 1.0, 2.0).unwrap();
        assert!((up - expect).abs() < 1e-12);
        assert_eq!(x, 3.0);

        let m = LocalRandomizer::krr(2, 2.0).unwrap();
        let (p, q) = m.krr_pq().unwrap();
        let (up, _) = chi_up_pair(&m, 1.0, 2.0).unwrap();
        assert!((up - 1.0 / ((p - q) * (1.0 / p + 1.0 / q).sqrt())).abs() < 1e-12);
        assert!(!worst_case_indices(&m).unwrap().tight);
    }
}
