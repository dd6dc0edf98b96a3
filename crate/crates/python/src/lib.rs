//! Python bindings: mechanisms, shuffle indices, asymptotic curves and the
//! certified FFT accountant. Long computations release the GIL.

use std::time::Instant;

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use shuffle_accountant::accountant::{
    self as acct, exact_small_n, run_accountant, ErrorBudget as CoreBudget, TuneOptions, DEFAULT_GRID_CAP,
};
use shuffle_accountant::asymptotics::{
    self as asym, epsilon_curve_closed_form, implied_alpha, reference_mass, solve_refined, AsymptoticParams,
    MomentBasis, Refinement,
};
use shuffle_accountant::mechanisms::SigmaConvention;
use shuffle_accountant::shuffle_index::worst_case_indices;
use shuffle_accountant::{Error, LocalRandomizer, ReferenceDistribution};

create_exception!(shuffle_accountant, InfeasibleBudgetError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InfeasibleBudget { .. } => InfeasibleBudgetError::new_err(e.to_string()),
        Error::InvalidMechanism(_) | Error::InvalidInput(_) | Error::Domain(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A local randomizer: k-randomized response or the generalized Gaussian
/// mechanism on an interval.
#[pyclass(name = "Mechanism", module = "shuffle_accountant", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyMechanism {
    inner: LocalRandomizer,
}

#[pymethods]
impl PyMechanism {
    #[staticmethod]
    fn krr(k: u32, eps0: f64) -> PyResult<Self> {
        Ok(Self {
            inner: LocalRandomizer::krr(k, eps0).map_err(to_py)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (beta, scale, domain = (0.0, 1.0)))]
    fn gen_gaussian(beta: f64, scale: f64, domain: (f64, f64)) -> PyResult<Self> {
        let inner = LocalRandomizer::gen_gaussian_on(beta, scale, [domain.0, domain.1]).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Gaussian noise level `sigma`; `convention` is "std_dev" (scale = σ√2)
    /// or "scale" (scale = σ).
    #[staticmethod]
    #[pyo3(signature = (sigma, convention = "std_dev"))]
    fn gaussian(sigma: f64, convention: &str) -> PyResult<Self> {
        let conv = match convention {
            "std_dev" => SigmaConvention::StdDev,
            "scale" => SigmaConvention::Scale,
            other => return Err(PyValueError::new_err(format!("unknown convention {other:?}"))),
        };
        Ok(Self {
            inner: LocalRandomizer::gaussian(sigma, conv).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(Self {
            inner: LocalRandomizer::from_json(s).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner {
            LocalRandomizer::Krr { .. } => "krr",
            LocalRandomizer::GenGaussian { .. } => "gen_gaussian",
        }
    }

    #[getter]
    fn domain(&self) -> (f64, f64) {
        self.inner.domain()
    }

    /// Mass `γ` of the blanket distribution.
    #[getter]
    fn blanket_mass(&self) -> f64 {
        reference_mass(&self.inner, ReferenceDistribution::Blanket)
    }

    /// `Var(l_0(Y))` under the reference, for the input pair `(x1, x1')`.
    #[pyo3(signature = (x1, x1p, reference = None))]
    fn variance_l0(&self, x1: f64, x1p: f64, reference: Option<Reference>) -> PyResult<f64> {
        let r = reference.unwrap_or_default().resolve(None)?;
        self.inner.variance_l0(x1, x1p, r).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        match self.inner {
            LocalRandomizer::Krr { k, eps0 } => format!("Mechanism.krr({k}, {eps0})"),
            LocalRandomizer::GenGaussian { beta, scale, domain } => {
                format!(
                    "Mechanism.gen_gaussian({beta}, {scale}, domain=({}, {}))",
                    domain[0], domain[1]
                )
            }
        }
    }
}

/// Reference distribution argument: "blanket", "local" (worst local
/// reference) or a number (local reference at that input).
#[derive(Default)]
enum Reference {
    #[default]
    Blanket,
    WorstLocal,
    At(f64),
}

impl<'py> FromPyObject<'_, 'py> for Reference {
    type Error = PyErr;

    fn extract(ob: Borrowed<'_, 'py, PyAny>) -> PyResult<Self> {
        if let Ok(x) = ob.extract::<f64>() {
            return Ok(Self::At(x));
        }
        match ob.extract::<&str>() {
            Ok("blanket") => Ok(Self::Blanket),
            Ok("local") => Ok(Self::WorstLocal),
            _ => Err(PyValueError::new_err(format!(
                "reference must be 'blanket', 'local' or a number, got {}",
                *ob
            ))),
        }
    }
}

impl Reference {
    /// Resolves "local" against the worst-case indices when given.
    fn resolve(&self, worst_local: Option<f64>) -> PyResult<ReferenceDistribution> {
        match self {
            Self::Blanket => Ok(ReferenceDistribution::Blanket),
            Self::WorstLocal => worst_local
                .map(ReferenceDistribution::Local)
                .ok_or_else(|| PyValueError::new_err("'local' needs a mechanism; pass the reference input instead")),
            Self::At(x) => Ok(ReferenceDistribution::Local(*x)),
        }
    }
}

/// Worst-case reference, default pair and the index `χ` of the pair.
fn setup(
    mech: &LocalRandomizer,
    reference: Option<Reference>,
    pair: Option<(f64, f64)>,
) -> PyResult<(ReferenceDistribution, (f64, f64), f64)> {
    let idx = worst_case_indices(mech).map_err(to_py)?;
    let r = reference.unwrap_or_default().resolve(Some(idx.ref_up))?;
    let pair = pair.unwrap_or(match r {
        ReferenceDistribution::Blanket => idx.pair_lo,
        ReferenceDistribution::Local(_) => idx.pair_up,
    });
    let var = mech.variance_l0(pair.0, pair.1, r).map_err(to_py)?;
    Ok((r, pair, (reference_mass(mech, r) / var).sqrt()))
}

#[pyclass(name = "ShuffleIndices", module = "shuffle_accountant", frozen, get_all)]
struct PyShuffleIndices {
    chi_lo: f64,
    chi_up: f64,
    pair_lo: (f64, f64),
    pair_up: (f64, f64),
    ref_up: f64,
    tight: bool,
}

#[pymethods]
impl PyShuffleIndices {
    #[getter]
    fn ratio(&self) -> f64 {
        self.chi_lo / self.chi_up
    }

    fn __repr__(&self) -> String {
        let tight = if self.tight { "True" } else { "False" };
        format!(
            "ShuffleIndices(chi_lo={}, chi_up={}, tight={tight})",
            self.chi_lo, self.chi_up
        )
    }
}

/// Worst-case shuffle indices `χ_lo <= χ_up` and their maximizers.
#[pyfunction]
fn shuffle_indices(py: Python<'_>, mech: &PyMechanism) -> PyResult<PyShuffleIndices> {
    let m = mech.inner;
    let i = py.detach(|| worst_case_indices(&m)).map_err(to_py)?;
    Ok(PyShuffleIndices {
        chi_lo: i.chi_lo,
        chi_up: i.chi_up,
        pair_lo: i.pair_lo,
        pair_up: i.pair_up,
        ref_up: i.ref_up,
        tight: i.tight,
    })
}

/// `ε_n(α, χ)` at the worst blanket pair: the refined solve, or the
/// Lambert-W closed form with `refined=False`.
#[pyfunction]
#[pyo3(signature = (mech, n, alpha = 1.0, refined = true))]
fn epsilon_curve(py: Python<'_>, mech: &PyMechanism, n: u64, alpha: f64, refined: bool) -> PyResult<f64> {
    let m = mech.inner;
    py.detach(|| {
        if refined {
            asym::epsilon_curve_refined(&m, alpha, n)
        } else {
            let idx = worst_case_indices(&m)?;
            epsilon_curve_closed_form(&AsymptoticParams::new(n, alpha, idx.chi_lo)?)
        }
    })
    .map_err(to_py)
}

#[pyclass(name = "DeltaBand", module = "shuffle_accountant", frozen, get_all)]
struct PyDeltaBand {
    eps_lower_curve: f64,
    eps_upper_curve: f64,
    eps_lower_closed_form: f64,
    eps_upper_closed_form: f64,
}

#[pymethods]
impl PyDeltaBand {
    fn __repr__(&self) -> String {
        format!(
            "DeltaBand(eps_lower_curve={}, eps_upper_curve={})",
            self.eps_lower_curve, self.eps_upper_curve
        )
    }
}

/// The privacy band `[ε_n(α, χ_up), ε_n(α, χ_lo)]` at level `α/n`.
#[pyfunction]
#[pyo3(signature = (mech, n, alpha = 1.0))]
fn delta_band(py: Python<'_>, mech: &PyMechanism, n: u64, alpha: f64) -> PyResult<PyDeltaBand> {
    let m = mech.inner;
    let b = py.detach(|| asym::delta_band(&m, alpha, n)).map_err(to_py)?;
    Ok(PyDeltaBand {
        eps_lower_curve: b.eps_lower_curve,
        eps_upper_curve: b.eps_upper_curve,
        eps_lower_closed_form: b.eps_lower_closed_form,
        eps_upper_closed_form: b.eps_upper_closed_form,
    })
}

/// Relative error budgets; unset components default to `eta_main`.
#[pyclass(name = "ErrorBudget", module = "shuffle_accountant", frozen, get_all, from_py_object)]
#[derive(Clone, Copy)]
struct PyErrorBudget {
    eta_main: f64,
    eta_trunc: f64,
    eta_disc: f64,
    eta_alias: f64,
}

#[pymethods]
impl PyErrorBudget {
    #[new]
    #[pyo3(signature = (eta_main = 0.1, eta_trunc = None, eta_disc = None, eta_alias = None))]
    fn new(eta_main: f64, eta_trunc: Option<f64>, eta_disc: Option<f64>, eta_alias: Option<f64>) -> PyResult<Self> {
        let b = CoreBudget::new(
            eta_main,
            eta_trunc.unwrap_or(eta_main),
            eta_disc.unwrap_or(eta_main),
            eta_alias.unwrap_or(eta_main),
        )
        .map_err(to_py)?;
        Ok(Self {
            eta_main: b.eta_main,
            eta_trunc: b.eta_trunc,
            eta_disc: b.eta_disc,
            eta_alias: b.eta_alias,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "ErrorBudget(eta_main={}, eta_trunc={}, eta_disc={}, eta_alias={})",
            self.eta_main, self.eta_trunc, self.eta_disc, self.eta_alias
        )
    }
}

impl PyErrorBudget {
    fn core(&self) -> CoreBudget {
        CoreBudget {
            eta_main: self.eta_main,
            eta_trunc: self.eta_trunc,
            eta_disc: self.eta_disc,
            eta_alias: self.eta_alias,
        }
    }
}

fn budget_or_default(b: Option<PyErrorBudget>) -> CoreBudget {
    b.map_or_else(|| CoreBudget::uniform(0.1).expect("valid default"), |b| b.core())
}

/// Certified bounds on the divergence at one `(ε, n)`.
#[pyclass(name = "Bounds", module = "shuffle_accountant", frozen, get_all)]
struct PyBounds {
    n: u64,
    eps: f64,
    lower: f64,
    upper: f64,
    e_trunc: f64,
    e_disc: f64,
    e_alias: f64,
    grid_size: usize,
    wall_ms: f64,
}

#[pymethods]
impl PyBounds {
    /// `(U − L)/U`.
    #[getter]
    fn rel_bandwidth(&self) -> f64 {
        if self.upper > 0.0 {
            (self.upper - self.lower) / self.upper
        } else {
            0.0
        }
    }

    fn __contains__(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    fn __repr__(&self) -> String {
        format!(
            "Bounds(n={}, eps={}, lower={:e}, upper={:e})",
            self.n, self.eps, self.lower, self.upper
        )
    }
}

/// Certified `[L, U]` for the blanket divergence at size `n`.
///
/// With `eps` unset, `ε` solves the refined curve at level `alpha`
/// (default 1). With `eps` set, the tuner uses `alpha` if given and the
/// level implied by `eps` otherwise.
#[pyfunction]
#[pyo3(signature = (
    mech, n, eps = None, alpha = None, reference = None, pair = None, budget = None,
    grid_cap = DEFAULT_GRID_CAP, align_atoms = true,
))]
#[allow(clippy::too_many_arguments)]
fn accountant(
    py: Python<'_>,
    mech: &PyMechanism,
    n: u64,
    eps: Option<f64>,
    alpha: Option<f64>,
    reference: Option<Reference>,
    pair: Option<(f64, f64)>,
    budget: Option<PyErrorBudget>,
    grid_cap: usize,
    align_atoms: bool,
) -> PyResult<PyBounds> {
    let m = mech.inner;
    let budget = budget_or_default(budget);
    let opts = TuneOptions { grid_cap, align_atoms };
    let (r, (x1, x1p), chi) = py.detach(|| setup(&m, reference, pair))?;
    let start = Instant::now();
    let (rec, _, _) = py
        .detach(|| {
            let (eps, a) = match eps {
                Some(e) => (
                    e,
                    match alpha {
                        Some(a) => a,
                        None => implied_alpha(&m, x1, x1p, r, e, n)?,
                    },
                ),
                None => {
                    let a = alpha.unwrap_or(1.0);
                    let basis = MomentBasis::new(&m, x1, x1p, r)?;
                    (solve_refined(&basis, a, n, chi, Refinement::TwoTerm)?, a)
                }
            };
            run_accountant(&m, x1, x1p, r, eps, n, &budget, a, chi, &opts)
        })
        .map_err(to_py)?;
    Ok(PyBounds {
        n,
        eps: rec.eps,
        lower: rec.lower,
        upper: rec.upper,
        e_trunc: rec.e_trunc,
        e_disc: rec.e_disc,
        e_alias: rec.e_alias,
        grid_size: rec.grid_size,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[pyclass(name = "BandRecord", module = "shuffle_accountant", frozen, get_all)]
struct PyBandRecord {
    n: u64,
    eps_used: f64,
    delta_upper: f64,
    delta_lower: f64,
    alpha_over_n: f64,
}

#[pymethods]
impl PyBandRecord {
    fn __repr__(&self) -> String {
        format!(
            "BandRecord(n={}, eps_used={}, delta_lower={:e}, delta_upper={:e})",
            self.n, self.eps_used, self.delta_lower, self.delta_upper
        )
    }
}

/// Certified upper (blanket) and lower (worst local reference) bounds
/// along the refined curve at level `alpha`, one record per `n`.
#[pyfunction]
#[pyo3(signature = (mech, n_grid, alpha = 1.0, budget = None))]
fn certified_band(
    py: Python<'_>,
    mech: &PyMechanism,
    n_grid: Vec<u64>,
    alpha: f64,
    budget: Option<PyErrorBudget>,
) -> PyResult<Vec<PyBandRecord>> {
    let m = mech.inner;
    let budget = budget_or_default(budget);
    let recs = py
        .detach(|| acct::certified_band(&m, alpha, &n_grid, &budget, &TuneOptions::default()))
        .map_err(to_py)?;
    Ok(recs
        .into_iter()
        .map(|r| PyBandRecord {
            n: r.n,
            eps_used: r.eps_used,
            delta_upper: r.delta_upper,
            delta_lower: r.delta_lower,
            alpha_over_n: r.alpha_over_n,
        })
        .collect())
}

/// Exact divergence for k-RR by enumerating output counts (small `n`).
#[pyfunction]
#[pyo3(signature = (mech, eps, n, reference = None, pair = None))]
fn exact_divergence(
    py: Python<'_>,
    mech: &PyMechanism,
    eps: f64,
    n: u64,
    reference: Option<Reference>,
    pair: Option<(f64, f64)>,
) -> PyResult<f64> {
    let m = mech.inner;
    py.detach(|| {
        let (r, (x1, x1p), _) = setup(&m, reference, pair)?;
        exact_small_n(&m, x1, x1p, r, eps, n).map_err(to_py)
    })
}

/// Monte-Carlo estimate of the divergence: `(estimate, std_error)`.
#[pyfunction]
#[pyo3(signature = (mech, eps, n, samples = 1_000_000, seed = 0, reference = None, pair = None))]
#[allow(clippy::too_many_arguments)]
fn monte_carlo(
    py: Python<'_>,
    mech: &PyMechanism,
    eps: f64,
    n: u64,
    samples: u64,
    seed: u64,
    reference: Option<Reference>,
    pair: Option<(f64, f64)>,
) -> PyResult<(f64, f64)> {
    let m = mech.inner;
    py.detach(|| {
        let (r, (x1, x1p), _) = setup(&m, reference, pair)?;
        let e = acct::monte_carlo(&m, x1, x1p, r, eps, n, samples, seed).map_err(to_py)?;
        Ok((e.estimate, e.std_error))
    })
}

#[pymodule]
#[pyo3(name = "shuffle_accountant")]
fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMechanism>()?;
    m.add_class::<PyShuffleIndices>()?;
    m.add_class::<PyDeltaBand>()?;
    m.add_class::<PyErrorBudget>()?;
    m.add_class::<PyBounds>()?;
    m.add_class::<PyBandRecord>()?;
    m.add("InfeasibleBudgetError", m.py().get_type::<InfeasibleBudgetError>())?;
    m.add_function(wrap_pyfunction!(shuffle_indices, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_curve, m)?)?;
    m.add_function(wrap_pyfunction!(delta_band, m)?)?;
    m.add_function(wrap_pyfunction!(accountant, m)?)?;
    m.add_function(wrap_pyfunction!(certified_band, m)?)?;
    m.add_function(wrap_pyfunction!(exact_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    Ok(())
}
