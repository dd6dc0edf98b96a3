//! Asymptotic blanket divergence and the resulting privacy curves.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::gen_gaussian::GgPar;
use crate::mechanisms::{to_loc, LocalRandomizer, ReferenceDistribution, MOMENT_REL_TOL};
use crate::numerics::roots::find_root_bisect;
use crate::numerics::special::{lambert_w0, std_normal_pdf, std_normal_sf};
use crate::shuffle_index::{worst_case_indices, ShuffleIndices};

/// Relative tolerance of the refined-curve bisection.
pub const REFINED_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticParams {
    pub n: u64,
    pub alpha: f64,
    pub chi: f64,
}

impl AsymptoticParams {
    pub fn new(n: u64, alpha: f64, chi: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(format!("n must be >= 2, got {n}")));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")));
        }
        if !(chi > 0.0) || !chi.is_finite() {
            return Err(Error::InvalidInput(format!("chi must be positive, got {chi}")));
        }
        Ok(Self { n, alpha, chi })
    }
}

/// Moments of the thinned summand `Z = B·l_ε(Y)` with `B ~ Bernoulli(γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mu_eps: f64,
    pub sigma_eps: f64,
    pub gamma: f64,
    pub kappa3: Option<f64>,
}

/// How many terms of the expansion `refined_divergence` keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refinement {
    /// The two explicit terms of the moderate-deviation expansion.
    #[default]
    TwoTerm,
    /// Adds the first skewness (third-cumulant) correction. Experimental.
    Skewness,
}

/// `φ(χ(e^ε−1)√n) / (χ³ (e^ε−1)² n^{3/2})`.
pub fn leading_divergence(eps: f64, n: u64, chi: f64) -> f64 {
    let t = eps.exp_m1();
    let n = n as f64;
    std_normal_pdf(chi * t * n.sqrt()) / (chi.powi(3) * t * t * n.powf(1.5))
}

/// `ε_n(α, χ) = log(1 + sqrt(2/(χ²n) · W(√n / (2αχ√(2π)))))`.
pub fn epsilon_curve_closed_form(p: &AsymptoticParams) -> Result<f64> {
    let n = p.n as f64;
    let z = n.sqrt() / (2.0 * p.alpha * p.chi * (2.0 * PI).sqrt());
    let w = lambert_w0(z)?;
    Ok((2.0 / (p.chi * p.chi * n) * w).sqrt().ln_1p())
}

/// Mass attached to a reference: γ for the blanket, 1 for a local law.
pub fn reference_mass(mech: &LocalRandomizer, reference: ReferenceDistribution) -> f64 {
    match reference {
        ReferenceDistribution::Blanket => mech.blanket_mass(),
        ReferenceDistribution::Local(_) => 1.0,
    }
}

/// Mixed moments `E_ref[A^i B^j]` (i + j ≤ 3) of `A = R_{x1}/R_ref`,
/// `B = R_{x1'}/R_ref`. Since `l_ε = A − e^ε B`, every moment of `l_ε` is a
/// polynomial in `e^ε` over this basis, so curves in ε need one set of
/// integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentBasis {
    mixed: [[f64; 4]; 4],
    pub gamma: f64,
}

impl MomentBasis {
    pub fn new(mech: &LocalRandomizer, x1: f64, x1p: f64, reference: ReferenceDistribution) -> Result<Self> {
        Self::with_tol(mech, x1, x1p, reference, MOMENT_REL_TOL)
    }

    #[allow(clippy::needless_range_loop)]
    pub fn with_tol(
        mech: &LocalRandomizer,
        x1: f64,
        x1p: f64,
        reference: ReferenceDistribution,
        rel_tol: f64,
    ) -> Result<Self> {
        // validates the pair and reference
        mech.par_value(x1, x1p, reference, 0.0, x1)?;
        let mut mixed = [[0.0; 4]; 4];
        match *mech {
            LocalRandomizer::Krr { k, .. } => {
                for y in 1..=k {
                    let y = y as f64;
                    let r = mech.reference_density(reference, y);
                    let a = mech.density(x1, y) / r;
                    let b = mech.density(x1p, y) / r;
                    for i in 0..4 {
                        for j in 0..(4 - i) {
                            mixed[i][j] += r * a.powi(i as i32) * b.powi(j as i32);
                        }
                    }
                }
            }
            LocalRandomizer::GenGaussian { .. } => {
                let loc = to_loc(reference);
                let par = GgPar::model_only(mech.gg().unwrap(), x1, x1p, loc, loc, 0.0);
                for i in 0..4 {
                    for j in 0..(4 - i) {
                        mixed[i][j] = if i + j == 0 {
                            1.0
                        } else {
                            par.integrate(|y| par.mixed_integrand(i as i32, j as i32, y), rel_tol)?
                        };
                    }
                }
            }
        }
        Ok(Self {
            mixed,
            gamma: reference_mass(mech, reference),
        })
    }

    /// `E[l_ε^k]` for k ≤ 3.
    pub fn raw_moment(&self, eps: f64, k: usize) -> f64 {
        let e = -eps.exp();
        let binom = [
            [1.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0],
            [1.0, 2.0, 1.0, 0.0],
            [1.0, 3.0, 3.0, 1.0],
        ];
        (0..=k)
            .map(|j| binom[k][j] * e.powi(j as i32) * self.mixed[k - j][j])
            .sum()
    }

    pub fn summary(&self, eps: f64, with_kappa3: bool) -> MomentSummary {
        let g = self.gamma;
        let m1 = self.raw_moment(eps, 1);
        let m2 = self.raw_moment(eps, 2);
        let var = g * m2 - g * g * m1 * m1;
        let kappa3 = with_kappa3.then(|| {
            let m3 = self.raw_moment(eps, 3);
            g * m3 - 3.0 * (g * m2) * (g * m1) + 2.0 * (g * m1).powi(3)
        });
        MomentSummary {
            mu_eps: -g * eps.exp_m1(),
            sigma_eps: var.max(0.0).sqrt(),
            gamma: g,
            kappa3,
        }
    }
}

/// Moments of the thinned summand at `eps`.
pub fn moment_summary(
    mech: &LocalRandomizer,
    x1: f64,
    x1p: f64,
    reference: ReferenceDistribution,
    eps: f64,
) -> Result<MomentSummary> {
    Ok(MomentBasis::new(mech, x1, x1p, reference)?.summary(eps, true))
}

/// Refined asymptotic divergence from a moment summary.
pub fn refined_from_moments(m: &MomentSummary, n: u64, level: Refinement) -> f64 {
    let nm1 = (n - 1) as f64;
    let (mu, s) = (m.mu_eps, m.sigma_eps);
    let t = -mu * nm1.sqrt() / s;
    let phi = std_normal_pdf(t);
    let mut a = mu * std_normal_sf(t) + (s * s + mu * mu) / (s * nm1.sqrt()) * phi;
    if let (Refinement::Skewness, Some(k3)) = (level, m.kappa3) {
        a -= k3 * mu / (6.0 * s.powi(3) * nm1.sqrt()) * phi * (t * t - 1.0)
            + k3 * (s * s + mu * mu) / (6.0 * s.powi(4)) * phi * t * (t * t - 3.0) / nm1;
    }
    a / m.gamma
}

/// Two-term refined asymptotic blanket divergence.
pub fn refined_divergence(
    mech: &LocalRandomizer,
    x1: f64,
    x1p: f64,
    reference: ReferenceDistribution,
    eps: f64,
    n: u64,
) -> Result<f64> {
    check_eps_n(eps, n)?;
    let m = moment_summary(mech, x1, x1p, reference, eps)?;
    Ok(refined_from_moments(&m, n, Refinement::TwoTerm))
}

/// `α = n·D_n(ε)`: the level whose refined curve passes through `ε` at `n`.
/// Used to tune the accountant when `ε` is fixed instead of `α`.
pub fn implied_alpha(
    mech: &LocalRandomizer,
    x1: f64,
    x1p: f64,
    reference: ReferenceDistribution,
    eps: f64,
    n: u64,
) -> Result<f64> {
    Ok(n as f64 * refined_divergence(mech, x1, x1p, reference, eps, n)?)
}

fn check_eps_n(eps: f64, n: u64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    if n < 2 {
        return Err(Error::InvalidInput(format!("n must be >= 2, got {n}")));
    }
    Ok(())
}

/// Solves `refined(ε) = α/n` by bisection on `[ε_cf/10, 10·ε_cf]`.
pub fn solve_refined(basis: &MomentBasis, alpha: f64, n: u64, chi: f64, level: Refinement) -> Result<f64> {
    let eps_cf = epsilon_curve_closed_form(&AsymptoticParams::new(n, alpha, chi)?)?;
    let target = alpha / n as f64;
    let f =
        |eps: f64| refined_from_moments(&basis.summary(eps, level == Refinement::Skewness), n, level) / target - 1.0;
    let root = find_root_bisect(f, eps_cf / 10.0, 10.0 * eps_cf, REFINED_REL_TOL)?;
    let m = basis.summary(root, false);
    let t = -m.mu_eps * ((n - 1) as f64).sqrt() / m.sigma_eps;
    if t < 1.0 {
        log::warn!("refined curve root at eps = {root} has t_n = {t} < 1; dropped terms may dominate");
    }
    Ok(root)
}

/// Refined curve at the worst `χ_lo` pair with the blanket reference.
pub fn epsilon_curve_refined(mech: &LocalRandomizer, alpha: f64, n: u64) -> Result<f64> {
    let idx = worst_case_indices(mech)?;
    epsilon_curve_refined_at(mech, &idx, alpha, n)
}

pub fn epsilon_curve_refined_at(mech: &LocalRandomizer, idx: &ShuffleIndices, alpha: f64, n: u64) -> Result<f64> {
    let basis = MomentBasis::new(mech, idx.pair_lo.0, idx.pair_lo.1, ReferenceDistribution::Blanket)?;
    solve_refined(&basis, alpha, n, idx.chi_lo, Refinement::TwoTerm)
}

/// The two ends of the asymptotic privacy band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaBand {
    /// Refined solve with the worst local reference (`χ_up` side).
    pub eps_lower_curve: f64,
    /// Refined solve with the blanket reference (`χ_lo` side).
    pub eps_upper_curve: f64,
    /// Closed forms `ε_n(α, χ_up)` and `ε_n(α, χ_lo)`.
    pub eps_lower_closed_form: f64,
    pub eps_upper_closed_form: f64,
}

pub fn delta_band(mech: &LocalRandomizer, alpha: f64, n: u64) -> Result<DeltaBand> {
    let idx = worst_case_indices(mech)?;
    delta_band_at(mech, &idx, alpha, n)
}

pub fn delta_band_at(mech: &LocalRandomizer, idx: &ShuffleIndices, alpha: f64, n: u64) -> Result<DeltaBand> {
    let upper = epsilon_curve_refined_at(mech, idx, alpha, n)?;
    let basis_up = MomentBasis::new(
        mech,
        idx.pair_up.0,
        idx.pair_up.1,
        ReferenceDistribution::Local(idx.ref_up),
    )?;
    let lower = solve_refined(&basis_up, alpha, n, idx.chi_up, Refinement::TwoTerm)?;
    Ok(DeltaBand {
        eps_lower_curve: lower,
        eps_upper_curve: upper,
        eps_lower_closed_form: epsilon_curve_closed_form(&AsymptoticParams::new(n, alpha, idx.chi_up)?)?,
        eps_upper_closed_form: epsilon_curve_closed_form(&AsymptoticParams::new(n, alpha, idx.chi_lo)?)?,
    })
}
