//! Explicit error terms and the certified interval.

use serde::{Deserialize, Serialize};

use super::pmf::{discretize, main_term, pmf_from_discretized, PmfStats};
use super::{DivergenceBounds, FftParams};
use crate::asymptotics::reference_mass;
use crate::error::{Error, Result};
use crate::mechanisms::{LocalRandomizer, ReferenceDistribution, SamplingLaw};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorTerms {
    pub e_trunc: f64,
    pub e_disc: f64,
    pub e_alias: f64,
}

/// Two-sided Bernstein bound `2·exp(−a² / (2·m·v + (2/3)·K·a))` for a sum of
/// `m` centred terms with variance `v` and range `K`, capped at 1.
pub(crate) fn bernstein(a: f64, m: f64, var: f64, range: f64) -> f64 {
    if !(a > 0.0) {
        return 1.0;
    }
    let denom = 2.0 * m * var + 2.0 / 3.0 * range * a;
    if denom <= 0.0 {
        return 0.0;
    }
    (2.0 * (-a * a / denom).exp()).min(1.0)
}

/// Exact truncation error `1 − (1 − γq)^{n−1}`.
pub(crate) fn truncation_error(gamma: f64, q: f64, n: u64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    -(((n - 1) as f64) * (-gamma * q).ln_1p()).exp_m1()
}

/// The three error terms for a tuned grid and the summand moments.
///
/// Discretization: rounding errors `B(X^di − X^tr)` have variance at most
/// `stats.disc_var` and range `stats.disc_range`; the bound is at deviation
/// `c`. Aliasing: the centred summand has variance `γE[(X^di)²] − γ²μ²` and
/// range `max|x_j| + γ|μ|`; the bound is at the alias-free radius.
pub fn error_bounds(params: &FftParams, stats: &PmfStats) -> ErrorTerms {
    let g = params.gamma;
    let m = (params.n - 1) as f64;
    let var_alias = (g * stats.m2_z_di - g * g * stats.mu_z_di * stats.mu_z_di).max(0.0);
    let range_alias = stats.max_abs_x + g * stats.mu_z_di.abs();
    ErrorTerms {
        e_trunc: truncation_error(g, stats.p_out, params.n),
        e_disc: bernstein(params.c, m, stats.disc_var, stats.disc_range),
        e_alias: bernstein(params.alias_radius(), m, var_alias, range_alias),
    }
}

/// Certified `[L, U]` for the blanket divergence with the given reference.
pub fn divergence_bounds(
    mech: &LocalRandomizer,
    x1: f64,
    x1p: f64,
    reference: ReferenceDistribution,
    eps: f64,
    params: &FftParams,
) -> Result<DivergenceBounds> {
    params.validate()?;
    let gamma = reference_mass(mech, reference);
    if (gamma - params.gamma).abs() > 1e-12 * gamma {
        return Err(Error::InvalidInput(format!(
            "params.gamma = {} does not match the reference mass {gamma}",
            params.gamma
        )));
    }
    let f_ref = mech.par_distribution(x1, x1p, reference, eps, SamplingLaw::Reference)?;
    let f1 = mech.par_distribution(x1, x1p, reference, eps, SamplingLaw::HypothesisX1)?;
    let f1p = mech.par_distribution(x1, x1p, reference, eps, SamplingLaw::HypothesisX1Prime)?;
    let d = discretize(params, &f_ref)?;
    let pmf = pmf_from_discretized(params, &d)?;
    drop(d);

    let errs = error_bounds(params, &pmf.stats);
    let keep = 1.0 - errs.e_trunc;
    let c = params.c;
    let (pp1, s1) = main_term(&pmf, &f1, c);
    let (pm1, s2) = main_term(&pmf, &f1, -c);
    let (pp1p, s3) = main_term(&pmf, &f1p, c);
    let (pm1p, s4) = main_term(&pmf, &f1p, -c);
    let ee = eps.exp();
    let roundoff = pmf.clipped_mass + s1.max(s2).max(s3).max(s4);
    let delta = (1.0 + ee) * (errs.e_alias + errs.e_disc + 2.0 * errs.e_trunc + roundoff);
    let (pp1, pm1, pp1p, pm1p) = (keep * pp1, keep * pm1, keep * pp1p, keep * pm1p);
    let lower = (pm1 - ee * pp1p - delta).max(0.0);
    let upper = (pp1 - ee * pm1p + delta).min(1.0);
    let mean_gap_ok = (pmf.mu_s_di - pmf.mu_s_tr).abs() <= c;
    if !mean_gap_ok {
        log::warn!(
            "mean gap |mu_S_di - mu_S_tr| = {:e} exceeds c = {c:e}; bounds stay valid but may be loose",
            (pmf.mu_s_di - pmf.mu_s_tr).abs()
        );
    }
    Ok(DivergenceBounds {
        lower,
        upper,
        midpoint: 0.5 * (lower + upper),
        e_trunc: errs.e_trunc,
        e_disc: errs.e_disc,
        e_alias: errs.e_alias,
        p_plus_x1: pp1,
        p_minus_x1: pm1,
        p_plus_x1p: pp1p,
        p_minus_x1p: pm1p,
        delta_err: delta,
        roundoff_mass: roundoff,
        mean_gap_ok,
        grid_size: params.grid_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_closed_forms() {
        assert_eq!(truncation_error(0.5, 0.0, 100), 0.0);
        assert!((truncation_error(0.5, 0.2, 2) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn bernstein_monotone_in_h() {
        let stats = |h: f64| PmfStats {
            p_out: 0.0,
            mu_z_tr: 0.0,
            mu_z_di: 0.0,
            m2_z_di: 1.0,
            max_abs_x: 3.0,
            disc_var: 0.8 * h * h / 4.0,
            disc_range: h,
        };
        let p = FftParams::new(1000, 0.8, 0.05, -4.0, 8.0, 1e-3, 1 << 16).unwrap();
        let a = error_bounds(&p, &stats(1e-3)).e_disc;
        let b = error_bounds(&p, &stats(5e-4)).e_disc;
        assert!(b < a);
    }
}
