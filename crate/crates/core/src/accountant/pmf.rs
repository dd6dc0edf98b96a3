//! Algorithm 1 (PMF of the centred sum) and Algorithm 2 (main term).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::FftParams;
use crate::error::{Error, Result};
use crate::mechanisms::Cdf;
use crate::numerics::fft::FftPlan;
use crate::numerics::quadrature::integrate_pieces;

/// Magnitude below which negative inverse-FFT entries count as round-off.
pub const NEGATIVE_TOL: f64 = 1e-12;
/// Bins lighter than this are skipped in the continuous main term; their
/// mass is reported and folded into the error allowance.
pub const SKIP_MASS: f64 = 1e-20;
const TRUNC_MEAN_TOL: f64 = 1e-13;

/// Moments of the truncated and rounded single summand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmfStats {
    /// `q = P(X <= s) + P(X > s + w_in)` under the reference law.
    pub p_out: f64,
    /// `E[X | s < X <= s + w_in]`.
    pub mu_z_tr: f64,
    /// Mean and second moment of the rounded truncated summand.
    pub mu_z_di: f64,
    pub m2_z_di: f64,
    /// Largest `|x_j|` carrying mass.
    pub max_abs_x: f64,
    /// Bernstein variance and range proxies for the rounding error
    /// `B·(X^di − X^tr)`: exact for discrete laws, worst case otherwise.
    pub disc_var: f64,
    pub disc_range: f64,
}

/// Rounded single-summand law on bins `first_bin ..= first_bin + probs.len() − 1`.
#[derive(Debug, Clone)]
pub(crate) struct Discretized {
    pub first_bin: i64,
    pub probs: Vec<f64>,
    pub stats: PmfStats,
}

/// Rounds the reference law restricted to `(s, s + w_in]` onto the grid.
pub(crate) fn discretize(params: &FftParams, f_ref: &dyn Cdf) -> Result<Discretized> {
    let (s, h, g) = (params.s, params.h, params.gamma);
    let t = s + params.w_in;
    let first_bin = params.first_bin();
    let o = params.lattice_offset();
    let bins = params.bins();
    let p_out = (f_ref.cdf(s) + f_ref.sf(t)).clamp(0.0, 1.0);
    let mut probs = vec![0.0; bins];

    if let Some(atoms) = f_ref.atoms() {
        let inside: Vec<(f64, f64)> = atoms.iter().copied().filter(|&(v, _)| v > s && v <= t).collect();
        let mass: f64 = inside.iter().map(|a| a.1).sum();
        if !(mass > 0.0) {
            return Err(Error::InvalidInput("truncation window holds no mass".into()));
        }
        let (mut mu_tr, mut mu_di, mut m2, mut dbar, mut d2, mut dmax, mut xmax) =
            (0.0, 0.0, 0.0, 0.0, 0.0, 0.0f64, 0.0f64);
        for &(v, p) in &inside {
            let p = p / mass;
            // bin j covers (x_j − h/2, x_j + h/2]
            let j = ((v - o) / h - 0.5).ceil() as i64;
            let idx = (j - first_bin).clamp(0, bins as i64 - 1);
            let x = params.bin_centre(first_bin + idx);
            probs[idx as usize] += p;
            let d = x - v;
            mu_tr += p * v;
            mu_di += p * x;
            m2 += p * x * x;
            dbar += p * d;
            d2 += p * d * d;
            dmax = dmax.max(d.abs());
            if p > 0.0 {
                xmax = xmax.max(x.abs());
            }
        }
        return Ok(Discretized {
            first_bin,
            probs,
            stats: PmfStats {
                p_out,
                mu_z_tr: mu_tr,
                mu_z_di: mu_di,
                m2_z_di: m2,
                max_abs_x: xmax,
                disc_var: (g * d2 - g * g * dbar * dbar).max(0.0),
                disc_range: dmax + g * dbar.abs(),
            },
        });
    }

    let mut edges = Vec::with_capacity(bins + 1);
    edges.push(s);
    for i in 1..bins {
        edges.push(params.bin_centre(first_bin + i as i64) - 0.5 * h);
    }
    edges.push(t);
    let masses = f_ref.bin_masses(&edges);
    let mass: f64 = masses.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::InvalidInput("truncation window holds no mass".into()));
    }
    let (mut mu_di, mut m2, mut xmax) = (0.0, 0.0, 0.0f64);
    for (i, (slot, m)) in probs.iter_mut().zip(masses).enumerate() {
        let p = m.max(0.0) / mass;
        *slot = p;
        let x = params.bin_centre(first_bin + i as i64);
        mu_di += p * x;
        m2 += p * x * x;
        if p > 0.0 {
            xmax = xmax.max(x.abs());
        }
    }
    let mu_tr = truncated_mean(f_ref, s, t, mass)?;
    Ok(Discretized {
        first_bin,
        probs,
        stats: PmfStats {
            p_out,
            mu_z_tr: mu_tr,
            mu_z_di: mu_di,
            m2_z_di: m2,
            max_abs_x: xmax,
            disc_var: g * h * h / 4.0,
            disc_range: h / 2.0 + g * (mu_tr - mu_di).abs(),
        },
    })
}

/// `E[X | s < X <= t]` from `t·F(t) − s·F(s) − ∫_s^t F`.
fn truncated_mean(f: &dyn Cdf, s: f64, t: f64, mass: f64) -> Result<f64> {
    let mut pts = vec![s];
    pts.extend(f.jumps().into_iter().filter(|&u| u > s && u < t));
    pts.push(t);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let scale = s.abs().max(t.abs()).max(1e-300);
    let integral = integrate_pieces(|u| f.cdf(u), &pts, TRUNC_MEAN_TOL, TRUNC_MEAN_TOL * scale)?.value;
    // subtracting F(s) inside keeps the pieces small when s is far out
    let fs = f.cdf(s);
    let partial = (t - s) * (f.cdf(t) - fs) - (integral - (t - s) * fs);
    Ok(s + partial / mass)
}

/// PMF of `S^di − μ_{S^di}` on the centred grid, with the means used by the
/// main term.
#[derive(Debug, Clone)]
pub struct CenteredPmf {
    buf: Vec<Complex64>,
    /// Bin width.
    pub h: f64,
    /// Integer part of `(μ_{S^di} − shift) / h`; index `i` sits at
    /// `z_i = (i − N/2 + m0)·h + shift − μ_{S^di}`.
    pub m0: i64,
    /// `(n − 1)·o` for a lattice offset `o`.
    pub shift: f64,
    pub mu_s_tr: f64,
    pub mu_s_di: f64,
    /// Total magnitude of the negative round-off entries that were zeroed.
    pub clipped_mass: f64,
    pub stats: PmfStats,
}

impl CenteredPmf {
    pub fn probs(&self) -> &[f64] {
        bytemuck::cast_slice(&self.buf)
    }

    pub fn len(&self) -> usize {
        2 * self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    /// Grid value `z_i` of entry `i`.
    pub fn z(&self, i: usize) -> f64 {
        (i as i64 - self.len() as i64 / 2 + self.m0) as f64 * self.h + (self.shift - self.mu_s_di)
    }

    pub fn total_mass(&self) -> f64 {
        neumaier(self.probs().iter().copied())
    }
}

/// Algorithm 1: FFT of the rounded summand, `((1−γ) + γψ_Z)^{n−1}`, inverse
/// FFT, then an exact integer re-centring by `m0 = round(μ_{S^di}/h)` bins.
pub fn calculate_pmf(params: &FftParams, f_ref: &dyn Cdf) -> Result<CenteredPmf> {
    params.validate()?;
    let d = discretize(params, f_ref)?;
    pmf_from_discretized(params, &d)
}

pub(crate) fn pmf_from_discretized(params: &FftParams, d: &Discretized) -> Result<CenteredPmf> {
    let n_grid = params.grid_size;
    let half = n_grid / 2;
    let g = params.gamma;
    let m = (params.n - 1) as f64;

    let mut buf = vec![Complex64::new(0.0, 0.0); half];
    {
        let view: &mut [f64] = bytemuck::cast_slice_mut(&mut buf);
        for (i, &p) in d.probs.iter().enumerate() {
            let j = (d.first_bin + i as i64).rem_euclid(n_grid as i64) as usize;
            view[j] += p;
        }
    }
    let plan = FftPlan::new(half)?;
    plan.real_forward_packed(&mut buf)?;

    let real_pow = |x: f64| {
        let w = 1.0 - g + g * x;
        let r = w.abs().powf(m);
        if w < 0.0 && (params.n - 1) % 2 == 1 {
            -r
        } else {
            r
        }
    };
    buf[0] = Complex64::new(real_pow(buf[0].re), real_pow(buf[0].im));
    for v in buf.iter_mut().skip(1) {
        let w = Complex64::new(1.0 - g + g * v.re, g * v.im);
        let log_mag = 0.5 * m * w.norm_sqr().ln();
        *v = if log_mag < -745.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::from_polar(log_mag.exp(), m * w.im.atan2(w.re))
        };
    }
    plan.real_inverse_packed(&mut buf)?;

    let mu_s_tr = m * g * d.stats.mu_z_tr;
    let mu_s_di = m * g * d.stats.mu_z_di;
    let shift = m * params.lattice_offset();
    let m0 = ((mu_s_di - shift) / params.h).round() as i64;
    let mut clipped = 0.0;
    {
        let view: &mut [f64] = bytemuck::cast_slice_mut(&mut buf);
        let r = (m0 - half as i64).rem_euclid(n_grid as i64) as usize;
        view.rotate_left(r);
        for (i, v) in view.iter_mut().enumerate() {
            if *v < 0.0 {
                if *v < -NEGATIVE_TOL {
                    return Err(Error::NegativeMass { index: i, mass: *v });
                }
                clipped -= *v;
                *v = 0.0;
            }
        }
    }
    Ok(CenteredPmf {
        buf,
        h: params.h,
        m0,
        shift,
        mu_s_tr,
        mu_s_di,
        clipped_mass: clipped,
        stats: d.stats,
    })
}

/// Algorithm 2: `Σ_j probs[j]·P(X > −c − z_j − μ_{S^tr})` with `X ~ F_x`.
/// The sign of `c` selects `P(+c)` or `P(−c)`.
pub fn calculate_main_term(pmf: &CenteredPmf, f_x: &dyn Cdf, c: f64) -> f64 {
    main_term(pmf, f_x, c).0
}

/// Main term and the mass of the bins skipped as negligible.
pub(crate) fn main_term(pmf: &CenteredPmf, f_x: &dyn Cdf, c: f64) -> (f64, f64) {
    let probs = pmf.probs();
    let shift = -c - pmf.mu_s_tr;
    if let Some(atoms) = f_x.atoms() {
        let terms = probs.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(i, &p)| {
            let u = shift - pmf.z(i);
            let sf: f64 = atoms.iter().filter(|a| a.0 > u).map(|a| a.1).sum();
            p * sf
        });
        return (neumaier(terms).clamp(0.0, 1.0), 0.0);
    }
    let mut kept = Vec::new();
    let mut skipped = 0.0;
    for (i, &p) in probs.iter().enumerate().rev() {
        if p > SKIP_MASS {
            kept.push(i);
        } else {
            skipped += p;
        }
    }
    // descending i gives ascending arguments
    let us: Vec<f64> = kept.iter().map(|&i| shift - pmf.z(i)).collect();
    let sf = f_x.sf_many(&us);
    let v = neumaier(kept.iter().zip(sf).map(|(&i, s)| probs[i] * s));
    (v.clamp(0.0, 1.0), skipped)
}

/// Compensated summation.
pub(crate) fn neumaier<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in it {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
