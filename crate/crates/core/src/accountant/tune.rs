//! Choice of `(c, s, w_in, h, w_out)` from the η knobs.

use super::bounds::{bernstein, truncation_error};
use super::pmf::discretize;
use super::{ErrorBudget, FftParams};
use crate::asymptotics::{reference_mass, refined_divergence};
use crate::error::{Error, Result};
use crate::mechanisms::{Cdf, LocalRandomizer, ReferenceDistribution, SamplingLaw};

/// Default upper limit on the FFT length.
pub const DEFAULT_GRID_CAP: usize = 1 << 28;
const MIN_GRID: usize = 16;
/// Upper limit on candidate bin widths tried by the atom alignment search.
const ALIGN_MAX_CANDIDATES: u64 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneOptions {
    pub grid_cap: usize,
    /// For discrete summands, pick the largest bin width whose *actual*
    /// rounding errors meet the discretization budget, instead of the
    /// worst-case `h/2` per atom. Both choices are certified.
    pub align_atoms: bool,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            grid_cap: DEFAULT_GRID_CAP,
            align_atoms: true,
        }
    }
}

/// Tunes the FFT parameters so that each error term stays below its share
/// of the refined asymptotic divergence `D_n`.
#[allow(clippy::too_many_arguments)]
pub fn tune_params(
    mech: &LocalRandomizer,
    x1: f64,
    x1p: f64,
    reference: ReferenceDistribution,
    eps: f64,
    n: u64,
    budget: &ErrorBudget,
    alpha: f64,
    chi: f64,
) -> Result<FftParams> {
    tune_params_with(
        mech,
        x1,
        x1p,
        reference,
        eps,
        n,
        budget,
        alpha,
        chi,
        &TuneOptions::default(),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn tune_params_with(
    mech: &LocalRandomizer,
    x1: f64,
    x1p: f64,
    reference: ReferenceDistribution,
    eps: f64,
    n: u64,
    budget: &ErrorBudget,
    alpha: f64,
    chi: f64,
    opts: &TuneOptions,
) -> Result<FftParams> {
    budget.validate()?;
    if !(alpha > 0.0) || !(chi > 0.0) {
        return Err(Error::InvalidInput(format!(
            "alpha and chi must be positive, got {alpha}, {chi}"
        )));
    }
    let target = refined_divergence(mech, x1, x1p, reference, eps, n)?;
    if !(target > 0.0) || !target.is_finite() {
        return Err(Error::Domain(format!("target divergence {target} is not positive")));
    }
    let gamma = reference_mass(mech, reference);
    let f_ref = mech.par_distribution(x1, x1p, reference, eps, SamplingLaw::Reference)?;
    let nm1 = (n - 1) as f64;

    // band half-width: c = σ²/(4α²) · η_main / log n, σ² = γ/χ²
    let sigma2 = gamma / (chi * chi);
    let mut c = sigma2 / (4.0 * alpha * alpha) * budget.eta_main / (n as f64).ln();

    // truncation window before snapping
    let (lo, hi) = match f_ref.atoms() {
        Some(a) => (a[0].0, a[a.len() - 1].0),
        None => {
            let g_q = -((-(budget.eta_trunc * target).min(0.5)).ln_1p() / nm1).exp_m1();
            let per_side = 0.5 * (g_q / gamma).min(1.0);
            quantile_window(&f_ref, per_side, f_ref.support)
        }
    };

    // bin width: worst-case Bernstein with |X^di − X^tr| <= h/2
    let l_disc = (2.0 / (budget.eta_disc * target)).ln().max(f64::MIN_POSITIVE);
    let qa = nm1 * gamma / 2.0;
    let qb = (1.0 + gamma) * c / 3.0;
    let qc = c * c / l_disc;
    let mut h = 2.0 * qc / (qb + (qb * qb + 4.0 * qa * qc).sqrt());
    let mut offset = 0.0;
    if let (Some(atoms), true) = (f_ref.atoms(), opts.align_atoms) {
        let mut thresholds = Vec::new();
        for law in [SamplingLaw::HypothesisX1, SamplingLaw::HypothesisX1Prime] {
            let f = mech.par_distribution(x1, x1p, reference, eps, law)?;
            thresholds.extend(f.atoms().unwrap_or(&[]).iter().map(|a| -a.0));
        }
        (h, offset, c) = aligned_width(atoms, &thresholds, gamma, nm1, c, l_disc, h);
    }

    let (lo, hi) = (lo - offset, hi - offset);
    let (j_lo, j_hi) = if f_ref.atoms().is_some() {
        // one spare bin per side: aligned widths put atoms exactly on edges
        ((lo / h).floor() - 1.0, (hi / h).ceil() + 1.0)
    } else {
        ((lo / h).floor(), (hi / h).ceil())
    };
    let bins = (j_hi - j_lo) as usize + 1;
    if bins + 2 > opts.grid_cap {
        return Err(infeasible(bins + 2, opts.grid_cap, budget.eta_main));
    }
    let s = offset + j_lo * h;
    let w_in = (j_hi - j_lo) * h;
    let provisional = FftParams {
        n,
        gamma,
        c,
        s,
        w_in,
        h,
        w_out: w_in,
        grid_size: (bins + 2).next_power_of_two(),
    };
    let stats = discretize(&provisional, &f_ref)?.stats;
    if f_ref.atoms().is_some() && stats.p_out > 0.0 {
        return Err(Error::Domain(format!(
            "support hull lost mass {:e} after snapping",
            stats.p_out
        )));
    }

    // alias-free radius from the Bernstein quadratic
    let l_alias = (2.0 / (budget.eta_alias * target)).ln().max(f64::MIN_POSITIVE);
    let var = (gamma * stats.m2_z_di - gamma * gamma * stats.mu_z_di * stats.mu_z_di).max(0.0);
    let range = stats.max_abs_x + gamma * stats.mu_z_di.abs();
    let b = range * l_alias / 3.0;
    let a = b + (b * b + 2.0 * l_alias * nm1 * var).sqrt();
    let needed = (2.0 * ((a / h).ceil() + 1.0))
        .max((bins + 2) as f64)
        .max(MIN_GRID as f64);
    if needed > opts.grid_cap as f64 {
        let grid = if needed >= u64::MAX as f64 {
            u64::MAX
        } else {
            (needed as u64).next_power_of_two()
        };
        return Err(Error::InfeasibleBudget {
            grid_size: grid,
            cap: opts.grid_cap as u64,
            min_eta_main: budget.eta_main * grid as f64 / opts.grid_cap as f64,
        });
    }
    let grid_size = (needed as usize).next_power_of_two();
    let params = FftParams::new(n, gamma, c, s, w_in, h, grid_size)?;

    let e_trunc = truncation_error(gamma, stats.p_out, n);
    let e_disc = bernstein(c, nm1, stats.disc_var, stats.disc_range);
    log::debug!(
        "tuned n={n} eps={eps}: c={c:e} h={h:e} offset={offset:e} bins={bins} N={grid_size} target={target:e} \
         e_trunc={e_trunc:e} e_disc={e_disc:e}"
    );
    Ok(params)
}

fn infeasible(grid: usize, cap: usize, eta_main: f64) -> Error {
    let grid = grid.next_power_of_two() as u64;
    Error::InfeasibleBudget {
        grid_size: grid,
        cap: cap as u64,
        min_eta_main: eta_main * grid as f64 / cap as f64,
    }
}

/// `(lo, hi)` with `P(X <= lo) <= t` and `P(X > hi) <= t`.
fn quantile_window(f: &dyn Cdf, t: f64, support: (f64, f64)) -> (f64, f64) {
    let (a, b) = support;
    let mut l = (a, b);
    for _ in 0..200 {
        let m = 0.5 * (l.0 + l.1);
        if f.cdf(m) <= t {
            l.0 = m;
        } else {
            l.1 = m;
        }
    }
    let mut u = (a, b);
    for _ in 0..200 {
        let m = 0.5 * (u.0 + u.1);
        if f.sf(m) <= t {
            u.1 = m;
        } else {
            u.0 = m;
        }
    }
    (l.0.min(u.1), u.1.max(l.0))
}

/// Largest bin width `h >= h0` that puts two anchors exactly on the
/// lattice `o + j·h` and whose exact rounding errors satisfy the
/// discretization budget and keep the mean gap below `c`. Anchors are the
/// atoms; with thinning (`γ < 1`) one anchor must be the exact zero of the
/// empty draws, which forces `o = 0`. Returns `(h, o)` with `|o| <= h/2`.
///
/// Aligned sums live exactly on `base + k·h`, so a lattice point within `c`
/// of a threshold (shifted by the mean gap) puts its whole mass between the
/// two bounds. Widths that keep every threshold clear of the lattice win;
/// otherwise the largest passing one, with `c` narrowed below the clearance
/// when its budget still holds. Returns `(h, o, c)`.
fn aligned_width(
    atoms: &[(f64, f64)],
    thresholds: &[f64],
    gamma: f64,
    nm1: f64,
    c: f64,
    l_disc: f64,
    h0: f64,
) -> (f64, f64, f64) {
    if !(h0 > 0.0) {
        return (h0, 0.0, c);
    }
    let rounding = |h: f64, o: f64| {
        let (mut dbar, mut d2, mut dmax) = (0.0, 0.0, 0.0f64);
        for &(v, p) in atoms {
            let d = ((v - o) / h - 0.5).ceil() * h + o - v;
            dbar += p * d;
            d2 += p * d * d;
            dmax = dmax.max(d.abs());
        }
        (dbar, d2, dmax)
    };
    let ok_at = |h: f64, o: f64, c: f64| {
        let (dbar, d2, dmax) = rounding(h, o);
        let var = (gamma * d2 - gamma * gamma * dbar * dbar).max(0.0);
        let range = dmax + gamma * dbar.abs();
        2.0 * nm1 * var + 2.0 / 3.0 * range * c <= c * c / l_disc && nm1 * gamma * dbar.abs() <= c
    };
    let ok = |h: f64, o: f64| ok_at(h, o, c);
    let mut pairs = Vec::new();
    for (i, a) in atoms.iter().enumerate() {
        if gamma < 1.0 {
            pairs.push((0.0, a.0));
        } else {
            pairs.extend(atoms[i + 1..].iter().map(|b| (a.0, b.0)));
        }
    }
    // distance from the nearest shifted threshold to the lattice
    let clearance = |h: f64, o: f64| {
        let base = if gamma < 1.0 { 0.0 } else { nm1 * o };
        let gap = nm1 * gamma * rounding(h, o).0;
        thresholds
            .iter()
            .map(|&t| {
                let r = (t + gap - base) / h;
                (r - r.round()).abs() * h
            })
            .fold(f64::INFINITY, f64::min)
    };
    let clear = |h: f64, o: f64| clearance(h, o) > c * (1.0 + 1e-6);
    // largest passing width, and largest passing width clear of thresholds
    let mut best = (h0, 0.0);
    let mut best_clear: Option<(f64, f64)> = None;
    for (u, v) in pairs {
        let gap = (v - u).abs();
        let floor = best_clear.map_or(h0, |b| b.0);
        if !(gap > floor) {
            continue;
        }
        let last = ((gap / floor).floor() as u64).min(ALIGN_MAX_CANDIDATES);
        for h in (1..=last).map(|m| gap / m as f64) {
            let o = u - (u / h).round() * h;
            if !ok(h, o) {
                continue;
            }
            if h > best.0 {
                best = (h, o);
            }
            if clear(h, o) {
                best_clear = Some((h, o));
                break;
            }
        }
    }
    if let Some((h, o)) = best_clear {
        return (h, o, c);
    }
    // no clear lattice: narrow the band to the clearance if the budget allows
    let (h, o) = best;
    if h > h0 {
        let narrow = clearance(h, o) / (1.0 + 1e-3);
        if narrow > 0.0 && narrow < c && ok_at(h, o, narrow) {
            return (h, o, narrow);
        }
    }
    (h, o, c)
}
