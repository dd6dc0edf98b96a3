use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use shuffle_accountant::accountant::{
    certified_band, exact_small_n, monte_carlo, run_accountant, ErrorBudget, TuneOptions, EXACT_MAX_N,
};
use shuffle_accountant::asymptotics::{
    delta_band_at, implied_alpha, reference_mass, solve_refined, MomentBasis, Refinement,
};
use shuffle_accountant::shuffle_index::{worst_case_indices, worst_case_indices_with, IndexOptions};
use shuffle_accountant::{Error, LocalRandomizer, ReferenceDistribution};

use crate::config::{BudgetArgs, Cli, Command, OutputArgs, RefArg, RunConfig};
use crate::output::{num, write_rows, Row};

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Core(Error),
    Io(String),
}

impl CliError {
    /// 3 for an infeasible budget, 2 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::InfeasibleBudget { .. }) => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Io(m) => f.write_str(m),
            CliError::Core(e @ Error::InfeasibleBudget { min_eta_main, .. }) => {
                write!(
                    f,
                    "{e} (hint: rerun with --eta-main {min_eta_main:e} or a larger --grid-cap)"
                )
            }
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::ShuffleIndex {
            mech,
            search_grid,
            rel_tol,
            out,
        } => {
            init_threads(&out)?;
            let mechs = mech.all()?;
            let opts = IndexOptions {
                rel_tol,
                grid: search_grid,
            };
            let rows = mechs
                .par_iter()
                .map(|m| {
                    let idx = worst_case_indices_with(m, &opts)?;
                    Ok(IndexRow {
                        mechanism: *m,
                        chi_lo: idx.chi_lo,
                        chi_up: idx.chi_up,
                        ratio: idx.ratio(),
                        pair_lo: idx.pair_lo,
                        pair_up: idx.pair_up,
                        ref_up: idx.ref_up,
                        tight: idx.tight,
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let config = base_config("shuffle-index", mechs, &out);
            write_rows(&out, &config, &rows, false)
        }
        Command::EpsilonCurve { mech, alpha, grid, out } => {
            init_threads(&out)?;
            let m = mech.single()?;
            let ns = grid.values()?;
            let idx = worst_case_indices(&m)?;
            let rows = ns
                .par_iter()
                .map(|&n| {
                    let b = delta_band_at(&m, &idx, alpha, n)?;
                    Ok(CurveRow {
                        n,
                        eps_closed_form: b.eps_upper_closed_form,
                        eps_refined: b.eps_upper_curve,
                        eps_at_chi_up: b.eps_lower_closed_form,
                        eps_at_chi_lo: b.eps_upper_closed_form,
                        eps_refined_at_chi_up: b.eps_lower_curve,
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let mut config = base_config("epsilon-curve", vec![m], &out);
            config.alpha = Some(alpha);
            config.n_grid = ns;
            write_rows(&out, &config, &rows, false)
        }
        Command::Accountant {
            mech,
            alpha,
            eps,
            reference,
            pair,
            grid,
            budget,
            oracle,
            mc_samples,
            seed,
            out,
        } => {
            init_threads(&out)?;
            let m = mech.single()?;
            let ns = grid.values()?;
            let budgets = budget.budgets()?;
            let job = AccountantJob::new(
                m,
                alpha,
                eps,
                reference,
                pair,
                &budget,
                oracle,
                mc_samples,
                seed,
                out.no_wall_time,
            )?;
            let tasks: Vec<(u64, ErrorBudget)> =
                ns.iter().flat_map(|&n| budgets.iter().map(move |&b| (n, b))).collect();
            let rows = tasks
                .par_iter()
                .map(|&(n, b)| job.row(n, &b))
                .collect::<Result<Vec<_>, CliError>>()?;
            let mut config = base_config("accountant", vec![m], &out);
            config.alpha = alpha;
            config.n_grid = ns;
            config.budgets = budgets;
            config.eps = eps;
            config.reference = Some(job.reference);
            config.pair = Some(job.pair);
            config.oracle = oracle;
            config.seed = oracle.then_some(seed);
            write_rows(&out, &config, &rows, oracle)
        }
        Command::DeltaBand {
            mech,
            alpha,
            grid,
            budget,
            out,
        } => {
            init_threads(&out)?;
            let m = mech.single()?;
            let ns = grid.values()?;
            let budgets = budget.budgets()?;
            let [b] = budgets.as_slice() else {
                return Err(CliError::Invalid("delta-band takes a single --eta-main".into()));
            };
            let opts = tune_options(&budget);
            let rows: Vec<BandRow> = certified_band(&m, alpha, &ns, b, &opts)?
                .into_iter()
                .map(|r| BandRow {
                    n: r.n,
                    eps_used: r.eps_used,
                    delta_upper: r.delta_upper,
                    delta_lower: r.delta_lower,
                    alpha_over_n: r.alpha_over_n,
                })
                .collect();
            let mut config = base_config("delta-band", vec![m], &out);
            config.alpha = Some(alpha);
            config.n_grid = ns;
            config.budgets = budgets;
            write_rows(&out, &config, &rows, false)
        }
    }
}

fn init_threads(out: &OutputArgs) -> Result<(), CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(out.threads)
        .build_global()
        .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))
}

fn tune_options(b: &BudgetArgs) -> TuneOptions {
    TuneOptions {
        grid_cap: b.grid_cap,
        align_atoms: !b.no_align,
    }
}

fn base_config(command: &str, mechanisms: Vec<LocalRandomizer>, out: &OutputArgs) -> RunConfig {
    RunConfig {
        command: command.into(),
        mechanisms,
        alpha: None,
        n_grid: Vec::new(),
        budgets: Vec::new(),
        eps: None,
        reference: None,
        pair: None,
        oracle: false,
        seed: None,
        format: out.format,
        output: out.output.clone(),
        threads: out.threads,
    }
}

/// Everything an accountant row needs besides `(n, budget)`.
struct AccountantJob {
    mech: LocalRandomizer,
    alpha: Option<f64>,
    eps: Option<f64>,
    reference: ReferenceDistribution,
    pair: (f64, f64),
    chi: f64,
    basis: Option<MomentBasis>,
    opts: TuneOptions,
    oracle: bool,
    mc_samples: u64,
    seed: u64,
    no_wall_time: bool,
}

impl AccountantJob {
    #[allow(clippy::too_many_arguments)]
    fn new(
        mech: LocalRandomizer,
        alpha: Option<f64>,
        eps: Option<f64>,
        reference: RefArg,
        pair: Option<(f64, f64)>,
        budget: &BudgetArgs,
        oracle: bool,
        mc_samples: u64,
        seed: u64,
        no_wall_time: bool,
    ) -> Result<Self, CliError> {
        if let Some(a) = alpha {
            if !(a > 0.0) || !a.is_finite() {
                return Err(CliError::Invalid(format!("--alpha must be positive, got {a}")));
            }
        }
        let idx = worst_case_indices(&mech)?;
        let (reference, default_pair) = match reference {
            RefArg::Blanket => (ReferenceDistribution::Blanket, idx.pair_lo),
            RefArg::WorstLocal => (ReferenceDistribution::Local(idx.ref_up), idx.pair_up),
            RefArg::Local(x) => (ReferenceDistribution::Local(x), idx.pair_up),
        };
        let pair = pair.unwrap_or(default_pair);
        let var = mech.variance_l0(pair.0, pair.1, reference)?;
        let chi = (reference_mass(&mech, reference) / var).sqrt();
        let basis = match eps {
            Some(_) => None,
            None => Some(MomentBasis::new(&mech, pair.0, pair.1, reference)?),
        };
        Ok(Self {
            mech,
            alpha,
            eps,
            reference,
            pair,
            chi,
            basis,
            opts: tune_options(budget),
            oracle,
            mc_samples,
            seed,
            no_wall_time,
        })
    }

    fn row(&self, n: u64, budget: &ErrorBudget) -> Result<AccountantRow, CliError> {
        let start = Instant::now();
        let (x1, x1p) = self.pair;
        let (eps, tune_alpha) = match (self.eps, &self.basis) {
            (Some(e), _) => {
                let a = match self.alpha {
                    Some(a) => a,
                    None => implied_alpha(&self.mech, x1, x1p, self.reference, e, n)?,
                };
                (e, a)
            }
            (None, Some(basis)) => {
                let a = self.alpha.unwrap_or(1.0);
                (solve_refined(basis, a, n, self.chi, Refinement::TwoTerm)?, a)
            }
            (None, None) => unreachable!("the basis is built whenever eps is absent"),
        };
        let (rec, b, _) = run_accountant(
            &self.mech,
            x1,
            x1p,
            self.reference,
            eps,
            n,
            budget,
            tune_alpha,
            self.chi,
            &self.opts,
        )?;
        let oracle = if self.oracle {
            Some(self.check(n, eps, b.lower, b.upper)?)
        } else {
            None
        };
        Ok(AccountantRow {
            n,
            eps,
            lower: rec.lower,
            upper: rec.upper,
            rel_bandwidth: rec.relative_width(),
            wall_ms: if self.no_wall_time {
                0.0
            } else {
                start.elapsed().as_secs_f64() * 1e3
            },
            grid_size: rec.grid_size,
            eta_main: budget.eta_main,
            e_trunc: rec.e_trunc,
            e_disc: rec.e_disc,
            e_alias: rec.e_alias,
            oracle,
        })
    }

    fn check(&self, n: u64, eps: f64, lower: f64, upper: f64) -> Result<OracleCheck, CliError> {
        let (x1, x1p) = self.pair;
        if matches!(self.mech, LocalRandomizer::Krr { .. }) && n <= EXACT_MAX_N {
            let v = exact_small_n(&self.mech, x1, x1p, self.reference, eps, n)?;
            return Ok(OracleCheck {
                kind: "exact".into(),
                value: v,
                std_error: 0.0,
                inside: lower <= v && v <= upper,
            });
        }
        let mc = monte_carlo(&self.mech, x1, x1p, self.reference, eps, n, self.mc_samples, self.seed)?;
        let slack = 3.0 * mc.std_error;
        Ok(OracleCheck {
            kind: "monte_carlo".into(),
            value: mc.estimate,
            std_error: mc.std_error,
            inside: lower - slack <= mc.estimate && mc.estimate <= upper + slack,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexRow {
    pub mechanism: LocalRandomizer,
    pub chi_lo: f64,
    pub chi_up: f64,
    pub ratio: f64,
    pub pair_lo: (f64, f64),
    pub pair_up: (f64, f64),
    pub ref_up: f64,
    pub tight: bool,
}

impl Row for IndexRow {
    fn header(_: bool) -> Vec<&'static str> {
        vec![
            "kind", "k", "eps0", "beta", "scale", "chi_lo", "chi_up", "ratio", "x1_lo", "x1p_lo", "x1_up", "x1p_up",
            "ref_up", "tight",
        ]
    }

    fn fields(&self) -> Vec<String> {
        let (kind, a, b, c, d) = match self.mechanism {
            LocalRandomizer::Krr { k, eps0 } => ("krr", k.to_string(), num(eps0), String::new(), String::new()),
            LocalRandomizer::GenGaussian { beta, scale, .. } => {
                ("gen-gaussian", String::new(), String::new(), num(beta), num(scale))
            }
        };
        vec![
            kind.into(),
            a,
            b,
            c,
            d,
            num(self.chi_lo),
            num(self.chi_up),
            num(self.ratio),
            num(self.pair_lo.0),
            num(self.pair_lo.1),
            num(self.pair_up.0),
            num(self.pair_up.1),
            num(self.ref_up),
            self.tight.to_string(),
        ]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveRow {
    pub n: u64,
    pub eps_closed_form: f64,
    pub eps_refined: f64,
    pub eps_at_chi_up: f64,
    pub eps_at_chi_lo: f64,
    pub eps_refined_at_chi_up: f64,
}

impl Row for CurveRow {
    fn header(_: bool) -> Vec<&'static str> {
        vec![
            "n",
            "eps_closed_form",
            "eps_refined",
            "eps_at_chi_up",
            "eps_at_chi_lo",
            "eps_refined_at_chi_up",
        ]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            num(self.eps_closed_form),
            num(self.eps_refined),
            num(self.eps_at_chi_up),
            num(self.eps_at_chi_lo),
            num(self.eps_refined_at_chi_up),
        ]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleCheck {
    pub kind: String,
    pub value: f64,
    pub std_error: f64,
    pub inside: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccountantRow {
    pub n: u64,
    pub eps: f64,
    pub lower: f64,
    pub upper: f64,
    pub rel_bandwidth: f64,
    pub wall_ms: f64,
    pub grid_size: usize,
    pub eta_main: f64,
    pub e_trunc: f64,
    pub e_disc: f64,
    pub e_alias: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleCheck>,
}

impl Row for AccountantRow {
    fn header(oracle: bool) -> Vec<&'static str> {
        let mut h = vec![
            "n",
            "eps",
            "lower",
            "upper",
            "rel_bandwidth",
            "wall_ms",
            "grid_size",
            "eta_main",
            "e_trunc",
            "e_disc",
            "e_alias",
        ];
        if oracle {
            h.extend(["oracle_kind", "oracle_value", "oracle_std_error", "oracle_inside"]);
        }
        h
    }

    fn fields(&self) -> Vec<String> {
        let mut f = vec![
            self.n.to_string(),
            num(self.eps),
            num(self.lower),
            num(self.upper),
            num(self.rel_bandwidth),
            num(self.wall_ms),
            self.grid_size.to_string(),
            num(self.eta_main),
            num(self.e_trunc),
            num(self.e_disc),
            num(self.e_alias),
        ];
        if let Some(o) = &self.oracle {
            f.extend([o.kind.clone(), num(o.value), num(o.std_error), o.inside.to_string()]);
        }
        f
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandRow {
    pub n: u64,
    pub eps_used: f64,
    pub delta_upper: f64,
    pub delta_lower: f64,
    pub alpha_over_n: f64,
}

impl Row for BandRow {
    fn header(_: bool) -> Vec<&'static str> {
        vec!["n", "eps_used", "delta_upper", "delta_lower", "alpha_over_n"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            num(self.eps_used),
            num(self.delta_upper),
            num(self.delta_lower),
            num(self.alpha_over_n),
        ]
    }
}
