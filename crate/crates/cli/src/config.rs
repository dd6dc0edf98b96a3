use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use shuffle_accountant::accountant::{ErrorBudget, DEFAULT_GRID_CAP};
use shuffle_accountant::{LocalRandomizer, ReferenceDistribution};

use crate::commands::CliError;

#[derive(Parser, Debug)]
#[command(name = "shuffle-acct", version, about = "Shuffle-model privacy accounting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Lower and upper shuffle indices of a mechanism.
    ///
    /// CSV columns: kind,k,eps0,beta,scale,chi_lo,chi_up,ratio,x1_lo,x1p_lo,
    /// x1_up,x1p_up,ref_up,tight. Comma-separated --k/--eps0 or --beta/--scale
    /// lists give one row per grid point.
    ShuffleIndex {
        #[command(flatten)]
        mech: MechArgs,
        /// Points per axis of the pair search grid.
        #[arg(long, default_value_t = shuffle_accountant::shuffle_index::SEARCH_GRID)]
        search_grid: usize,
        /// Relative tolerance of the variance quadratures.
        #[arg(long, default_value_t = 1e-7)]
        rel_tol: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Asymptotic privacy curves over n.
    ///
    /// CSV columns: n,eps_closed_form,eps_refined,eps_at_chi_up,eps_at_chi_lo,
    /// eps_refined_at_chi_up. eps_closed_form and eps_at_chi_lo are the
    /// Lambert-W curve at chi_lo, eps_at_chi_up the same curve at chi_up;
    /// eps_refined solves the two-term expansion with the blanket reference and
    /// eps_refined_at_chi_up with the worst local reference.
    EpsilonCurve {
        #[command(flatten)]
        mech: MechArgs,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[command(flatten)]
        grid: NArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Certified bounds on the blanket divergence, swept over n and eta_main.
    ///
    /// CSV columns: n,eps,lower,upper,rel_bandwidth,wall_ms,grid_size,eta_main,
    /// e_trunc,e_disc,e_alias; with --oracle also oracle_kind,oracle_value,
    /// oracle_std_error,oracle_inside.
    Accountant {
        #[command(flatten)]
        mech: MechArgs,
        /// Level for the privacy curve and the tuning rule. Without it the
        /// curve uses 1 and a fixed --eps tunes with alpha = n·D_n(eps).
        #[arg(long)]
        alpha: Option<f64>,
        /// Fixed privacy parameter instead of the refined curve.
        #[arg(long)]
        eps: Option<f64>,
        /// Reference: `blanket`, `local` (worst local reference) or `local:X`.
        #[arg(long = "ref", default_value = "blanket", value_parser = parse_reference)]
        reference: RefArg,
        /// Neighbouring inputs `x1,x1'`; defaults to the worst-case pair.
        #[arg(long, value_parser = parse_pair)]
        pair: Option<(f64, f64)>,
        #[command(flatten)]
        grid: NArgs,
        #[command(flatten)]
        budget: BudgetArgs,
        /// Cross-check each row with exact enumeration (k-RR, n <= 20) or
        /// Monte Carlo.
        #[arg(long)]
        oracle: bool,
        /// Monte-Carlo sample count for --oracle.
        #[arg(long, default_value_t = 1_000_000)]
        mc_samples: u64,
        /// Seed of the Monte-Carlo oracle.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Certified delta band along the refined curve eps_n(alpha, chi_lo).
    ///
    /// CSV columns: n,eps_used,delta_upper,delta_lower,alpha_over_n.
    DeltaBand {
        #[command(flatten)]
        mech: MechArgs,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[command(flatten)]
        grid: NArgs,
        #[command(flatten)]
        budget: BudgetArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechKind {
    Krr,
    GenGaussian,
}

#[derive(Args, Debug, Clone)]
pub struct MechArgs {
    #[arg(long, value_enum, default_value = "krr")]
    pub mech: MechKind,
    /// k-RR alphabet size(s).
    #[arg(long, value_delimiter = ',', default_value = "3")]
    pub k: Vec<u32>,
    /// k-RR local privacy level(s).
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub eps0: Vec<f64>,
    /// Generalized-Gaussian shape(s) in [1, 2].
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub beta: Vec<f64>,
    /// Generalized-Gaussian scale(s); density ∝ exp(−|y−x|^β / scale^β).
    #[arg(long, value_delimiter = ',')]
    pub scale: Vec<f64>,
    /// Input domain `lo,hi` of the generalized Gaussian.
    #[arg(long, value_parser = parse_pair, default_value = "0,1")]
    pub domain: (f64, f64),
}

impl MechArgs {
    /// Every mechanism of the (k, eps0) or (beta, scale) grid.
    pub fn all(&self) -> Result<Vec<LocalRandomizer>, CliError> {
        let mut out = Vec::new();
        match self.mech {
            MechKind::Krr => {
                for &k in &self.k {
                    for &eps0 in &self.eps0 {
                        out.push(LocalRandomizer::krr(k, eps0)?);
                    }
                }
            }
            MechKind::GenGaussian => {
                if self.scale.is_empty() {
                    return Err(CliError::Invalid("--scale is required for gen-gaussian".into()));
                }
                for &beta in &self.beta {
                    for &scale in &self.scale {
                        out.push(LocalRandomizer::gen_gaussian_on(
                            beta,
                            scale,
                            [self.domain.0, self.domain.1],
                        )?);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn single(&self) -> Result<LocalRandomizer, CliError> {
        let all = self.all()?;
        match all.as_slice() {
            [m] => Ok(*m),
            _ => Err(CliError::Invalid(
                "parameter lists are only accepted by shuffle-index".into(),
            )),
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct NArgs {
    /// Number of users.
    #[arg(long, conflicts_with = "n_grid")]
    pub n: Option<u64>,
    /// Log-spaced grid `a:b:steps` from a to b inclusive.
    #[arg(long)]
    pub n_grid: Option<String>,
}

impl NArgs {
    pub fn values(&self) -> Result<Vec<u64>, CliError> {
        let grid = match (&self.n, &self.n_grid) {
            (Some(n), None) => vec![*n],
            (None, Some(spec)) => parse_n_grid(spec)?,
            _ => return Err(CliError::Invalid("give --n or --n-grid".into())),
        };
        if grid.iter().any(|&n| n < 2) {
            return Err(CliError::Invalid("n must be >= 2".into()));
        }
        Ok(grid)
    }
}

#[derive(Args, Debug, Clone)]
pub struct BudgetArgs {
    /// Main-term knob; a comma-separated list sweeps it (accountant only).
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub eta_main: Vec<f64>,
    /// Truncation knob; defaults to eta_main.
    #[arg(long)]
    pub eta_trunc: Option<f64>,
    /// Discretization knob; defaults to eta_main.
    #[arg(long)]
    pub eta_disc: Option<f64>,
    /// Aliasing knob; defaults to eta_main.
    #[arg(long)]
    pub eta_alias: Option<f64>,
    /// Largest FFT length accepted before reporting an infeasible budget.
    #[arg(long, default_value_t = DEFAULT_GRID_CAP)]
    pub grid_cap: usize,
    /// Use the worst-case h/2 rounding bound for discrete laws instead of
    /// searching for an atom-aligned bin width.
    #[arg(long)]
    pub no_align: bool,
}

impl BudgetArgs {
    pub fn budgets(&self) -> Result<Vec<ErrorBudget>, CliError> {
        self.eta_main
            .iter()
            .map(|&m| {
                ErrorBudget::new(
                    m,
                    self.eta_trunc.unwrap_or(m),
                    self.eta_disc.unwrap_or(m),
                    self.eta_alias.unwrap_or(m),
                )
                .map_err(CliError::from)
            })
            .collect()
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker threads for the n-grid map (0 = all cores).
    #[arg(long, env = "SHUFFLE_ACCT_THREADS", default_value_t = 0)]
    pub threads: usize,
    /// Write wall_ms as 0 so that repeated runs are byte-identical.
    #[arg(long)]
    pub no_wall_time: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefArg {
    Blanket,
    WorstLocal,
    Local(f64),
}

fn parse_reference(s: &str) -> Result<RefArg, String> {
    match s {
        "blanket" => Ok(RefArg::Blanket),
        "local" => Ok(RefArg::WorstLocal),
        _ => s
            .strip_prefix("local:")
            .and_then(|x| x.trim().parse().ok())
            .map(RefArg::Local)
            .ok_or_else(|| format!("expected blanket, local or local:X, got {s:?}")),
    }
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts.as_slice() {
        [a, b] => Ok((
            a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?,
            b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?,
        )),
        _ => Err(format!("expected two comma-separated numbers, got {s:?}")),
    }
}

/// `a:b:steps`, log-spaced and rounded; duplicates after rounding are dropped.
pub fn parse_n_grid(s: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Invalid(format!("--n-grid expects a:b:steps, got {s:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, steps] = parts.as_slice() else {
        return Err(bad());
    };
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    let steps: usize = steps.trim().parse().map_err(|_| bad())?;
    if !(a >= 2.0) || !(b >= a) || steps == 0 || !b.is_finite() {
        return Err(CliError::Invalid(format!(
            "--n-grid needs 2 <= a <= b and steps >= 1, got {s:?}"
        )));
    }
    let mut out: Vec<u64> = if steps == 1 {
        vec![a.round() as u64]
    } else {
        let r = (b / a).ln() / (steps - 1) as f64;
        (0..steps).map(|i| (a * (r * i as f64).exp()).round() as u64).collect()
    };
    out.dedup();
    Ok(out)
}

/// Echo of the effective configuration, written alongside JSON results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub mechanisms: Vec<LocalRandomizer>,
    pub alpha: Option<f64>,
    pub n_grid: Vec<u64>,
    pub budgets: Vec<ErrorBudget>,
    pub eps: Option<f64>,
    pub reference: Option<ReferenceDistribution>,
    pub pair: Option<(f64, f64)>,
    pub oracle: bool,
    pub seed: Option<u64>,
    pub format: Format,
    pub output: Option<PathBuf>,
    pub threads: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_grid_is_log_spaced_and_inclusive() {
        assert_eq!(parse_n_grid("1000:100000:3").unwrap(), vec![1000, 10000, 100000]);
        assert_eq!(parse_n_grid("2:3:5").unwrap(), vec![2, 3]);
        assert!(parse_n_grid("100:10:3").is_err());
        assert!(parse_n_grid("1e3:1e4").is_err());
        assert_eq!(parse_n_grid("1e3:1e4:2").unwrap(), vec![1000, 10000]);
    }

    #[test]
    fn reference_and_pair_syntax() {
        assert_eq!(parse_reference("blanket").unwrap(), RefArg::Blanket);
        assert_eq!(parse_reference("local").unwrap(), RefArg::WorstLocal);
        assert_eq!(parse_reference("local:3").unwrap(), RefArg::Local(3.0));
        assert!(parse_reference("local:x").is_err());
        assert_eq!(parse_pair("1, 2").unwrap(), (1.0, 2.0));
        assert!(parse_pair("1").is_err());
    }
}
