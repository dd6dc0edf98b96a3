//! Per-n records and the certified delta band.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tune::{tune_params_with, TuneOptions};
use super::{divergence_bounds, DivergenceBounds, ErrorBudget, FftParams};
use crate::asymptotics::epsilon_curve_refined_at;
use crate::error::Result;
use crate::mechanisms::{LocalRandomizer, ReferenceDistribution};
use crate::shuffle_index::worst_case_indices;

/// One accountant run, in the serialized column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccountantRecord {
    pub n: u64,
    pub eps: f64,
    pub lower: f64,
    pub upper: f64,
    pub e_trunc: f64,
    pub e_disc: f64,
    pub e_alias: f64,
    pub grid_size: usize,
    pub wall_ms: f64,
}

impl AccountantRecord {
    pub fn relative_width(&self) -> f64 {
        if self.upper > 0.0 {
            (self.upper - self.lower) / self.upper
        } else {
            0.0
        }
    }
}

/// Tunes and runs the accountant once, timing both steps together.
#[allow(clippy::too_many_arguments)]
pub fn run_accountant(
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
) -> Result<(AccountantRecord, DivergenceBounds, FftParams)> {
    let start = Instant::now();
    let params = tune_params_with(mech, x1, x1p, reference, eps, n, budget, alpha, chi, opts)?;
    let b = divergence_bounds(mech, x1, x1p, reference, eps, &params)?;
    let rec = AccountantRecord {
        n,
        eps,
        lower: b.lower,
        upper: b.upper,
        e_trunc: b.e_trunc,
        e_disc: b.e_disc,
        e_alias: b.e_alias,
        grid_size: params.grid_size,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((rec, b, params))
}

/// Certified band at one `n`: the upper bound uses the blanket reference at
/// the worst `χ_lo` pair, the lower bound the worst local reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandRecord {
    pub n: u64,
    pub eps_used: f64,
    pub delta_upper: f64,
    pub delta_lower: f64,
    pub alpha_over_n: f64,
    pub upper_run: AccountantRecord,
    pub lower_run: AccountantRecord,
}

pub fn certified_band(
    mech: &LocalRandomizer,
    alpha: f64,
    n_grid: &[u64],
    budget: &ErrorBudget,
    opts: &TuneOptions,
) -> Result<Vec<BandRecord>> {
    budget.validate()?;
    let idx = worst_case_indices(mech)?;
    n_grid
        .par_iter()
        .map(|&n| {
            let eps = epsilon_curve_refined_at(mech, &idx, alpha, n)?;
            let (x1, x1p) = idx.pair_lo;
            let (up, _, _) = run_accountant(
                mech,
                x1,
                x1p,
                ReferenceDistribution::Blanket,
                eps,
                n,
                budget,
                alpha,
                idx.chi_lo,
                opts,
            )?;
            let (y1, y1p) = idx.pair_up;
            let (lo, _, _) = run_accountant(
                mech,
                y1,
                y1p,
                ReferenceDistribution::Local(idx.ref_up),
                eps,
                n,
                budget,
                alpha,
                idx.chi_up,
                opts,
            )?;
            Ok(BandRecord {
                n,
                eps_used: eps,
                delta_upper: up.upper,
                delta_lower: lo.lower,
                alpha_over_n: alpha / n as f64,
                upper_run: up,
                lower_run: lo,
            })
        })
        .collect()
}
