//! Certified finite-n bounds on the blanket divergence.
//!
//! The sum `S = Σ_{i<n} B_i·l_ε(Y_i)` is truncated to a window, rounded to a
//! grid of width `h` and convolved by FFT. Each approximation comes with an
//! explicit Bernstein-type error bound, so the returned interval `[L, U]`
//! contains the exact divergence (up to floating-point round-off).

mod band;
mod bounds;
mod oracle;
mod pmf;
mod tune;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use band::{certified_band, run_accountant, AccountantRecord, BandRecord};
pub use bounds::{divergence_bounds, error_bounds, ErrorTerms};
pub use oracle::{exact_small_n, monte_carlo, McEstimate, EXACT_MAX_N};
pub use pmf::{calculate_main_term, calculate_pmf, CenteredPmf, PmfStats};
pub use tune::{tune_params, tune_params_with, TuneOptions, DEFAULT_GRID_CAP};

/// Grid and window of one FFT run.
///
/// Bin centres sit at `o + j·h` with `o = lattice_offset()`. With thinning
/// (`γ < 1`) the empty draws contribute exact zeros, so `s` must be a
/// multiple of `h` and `o = 0`; with `γ = 1` the number of summands is fixed
/// and any offset only shifts the sum by `(n − 1)·o`. The FFT covers `|S^di − μ_{S^di}| <= w_out / 2` without
/// wrap-around.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FftParams {
    pub n: u64,
    pub gamma: f64,
    pub c: f64,
    pub s: f64,
    pub w_in: f64,
    pub h: f64,
    pub w_out: f64,
    pub grid_size: usize,
}

impl FftParams {
    /// Builds parameters for a given grid size; `w_out` is set to
    /// `(grid_size − 2)·h`, the width that is certainly alias-free after the
    /// integer centering shift.
    pub fn new(n: u64, gamma: f64, c: f64, s: f64, w_in: f64, h: f64, grid_size: usize) -> Result<Self> {
        let p = Self {
            n,
            gamma,
            c,
            s,
            w_in,
            h,
            w_out: grid_size.saturating_sub(2) as f64 * h,
            grid_size,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n < 2 {
            return bad(format!("n must be >= 2, got {}", self.n));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(self.c >= 0.0) || !self.c.is_finite() {
            return bad(format!("c must be finite and >= 0, got {}", self.c));
        }
        if !(self.h > 0.0) || !self.h.is_finite() || !(self.w_in > 0.0) || !self.s.is_finite() {
            return bad("h and w_in must be positive and s finite".into());
        }
        if !self.grid_size.is_power_of_two() || self.grid_size < 4 {
            return bad(format!("grid_size must be a power of two >= 4, got {}", self.grid_size));
        }
        let aligned: &[(&str, f64)] = if self.gamma < 1.0 {
            &[("s", self.s), ("w_in", self.w_in)]
        } else {
            &[("w_in", self.w_in)]
        };
        for &(name, v) in aligned {
            let r = v / self.h;
            if (r - r.round()).abs() > 1e-6 {
                return bad(format!("{name} = {v} is not a multiple of h = {}", self.h));
            }
        }
        if self.bins() + 2 > self.grid_size {
            return bad(format!(
                "inner window has {} bins but the grid holds {}",
                self.bins(),
                self.grid_size
            ));
        }
        if self.w_out < self.w_in || (self.grid_size as f64) * self.h < self.w_out - 1e-12 {
            return bad("outer window must contain the inner window and fit the grid".into());
        }
        Ok(())
    }

    /// Index `j` of the first bin centre `s = o + j·h`.
    pub fn first_bin(&self) -> i64 {
        (self.s / self.h).round() as i64
    }

    /// Offset `o` of the bin lattice; zero whenever `γ < 1`.
    pub fn lattice_offset(&self) -> f64 {
        if self.gamma < 1.0 {
            0.0
        } else {
            self.s - self.first_bin() as f64 * self.h
        }
    }

    /// Centre of bin `j`.
    pub fn bin_centre(&self, j: i64) -> f64 {
        self.lattice_offset() + j as f64 * self.h
    }

    /// Number of bin centres in `[s, s + w_in]`.
    pub fn bins(&self) -> usize {
        (self.w_in / self.h).round() as usize + 1
    }

    /// Half-width of the alias-free region around `μ_{S^di}`.
    pub fn alias_radius(&self) -> f64 {
        0.5 * self.w_out
    }
}

/// Relative accuracy knobs, each a fraction of the target divergence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub eta_main: f64,
    pub eta_trunc: f64,
    pub eta_disc: f64,
    pub eta_alias: f64,
}

impl ErrorBudget {
    pub fn new(eta_main: f64, eta_trunc: f64, eta_disc: f64, eta_alias: f64) -> Result<Self> {
        let b = Self {
            eta_main,
            eta_trunc,
            eta_disc,
            eta_alias,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn uniform(eta: f64) -> Result<Self> {
        Self::new(eta, eta, eta, eta)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta_main", self.eta_main),
            ("eta_trunc", self.eta_trunc),
            ("eta_disc", self.eta_disc),
            ("eta_alias", self.eta_alias),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Certified interval for the blanket divergence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceBounds {
    pub lower: f64,
    pub upper: f64,
    pub midpoint: f64,
    pub e_trunc: f64,
    pub e_disc: f64,
    pub e_alias: f64,
    /// `P(+c; x1)`, `P(−c; x1)`, `P(+c; x1')`, `P(−c; x1')`.
    pub p_plus_x1: f64,
    pub p_minus_x1: f64,
    pub p_plus_x1p: f64,
    pub p_minus_x1p: f64,
    /// Total error allowance added on each side.
    pub delta_err: f64,
    /// Round-off mass (clipped negatives and skipped negligible bins)
    /// folded into `delta_err`.
    pub roundoff_mass: f64,
    pub mean_gap_ok: bool,
    pub grid_size: usize,
}

impl DivergenceBounds {
    /// `(U − L) / U`, or 0 when both vanish.
    pub fn relative_width(&self) -> f64 {
        if self.upper > 0.0 {
            (self.upper - self.lower) / self.upper
        } else {
            0.0
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}
