//! Local randomizers, their blanket distributions and the law of the
//! privacy-amplification variable `l_ε(Y)`.

pub(crate) mod gen_gaussian;
mod par;

use serde::{Deserialize, Serialize};

pub use par::{Cdf, DiscreteDist, ParDistribution, SamplingLaw};

use crate::error::{Error, Result};
use gen_gaussian::{GenGauss, GgPar, Loc};

/// Relative tolerance for the quadratures behind continuous-mechanism moments.
pub const MOMENT_REL_TOL: f64 = 1e-10;

fn unit_domain() -> [f64; 2] {
    [0.0, 1.0]
}

/// A local randomizer.
///
/// k-RR takes inputs and outputs in `{1, ..., k}` (passed as `f64`). The
/// generalized Gaussian mechanism adds noise with density proportional to
/// `exp(-|y - x|^β / scale^β)` to an input in `domain`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LocalRandomizer {
    Krr {
        k: u32,
        eps0: f64,
    },
    GenGaussian {
        beta: f64,
        scale: f64,
        #[serde(default = "unit_domain")]
        domain: [f64; 2],
    },
}

/// How a Gaussian noise level σ maps to the `scale` parameter at β = 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaConvention {
    /// `scale = σ·√2`, so the noise has standard deviation σ.
    StdDev,
    /// `scale = σ`.
    Scale,
}

/// Reference distribution in the denominator of `l_ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceDistribution {
    Blanket,
    Local(f64),
}

impl LocalRandomizer {
    pub fn krr(k: u32, eps0: f64) -> Result<Self> {
        let m = Self::Krr { k, eps0 };
        m.validate()?;
        Ok(m)
    }

    pub fn gen_gaussian(beta: f64, scale: f64) -> Result<Self> {
        Self::gen_gaussian_on(beta, scale, [0.0, 1.0])
    }

    pub fn gen_gaussian_on(beta: f64, scale: f64, domain: [f64; 2]) -> Result<Self> {
        let m = Self::GenGaussian { beta, scale, domain };
        m.validate()?;
        Ok(m)
    }

    /// Gaussian mechanism (β = 2) with noise level σ.
    pub fn gaussian(sigma: f64, convention: SigmaConvention) -> Result<Self> {
        let scale = match convention {
            SigmaConvention::StdDev => sigma * std::f64::consts::SQRT_2,
            SigmaConvention::Scale => sigma,
        };
        Self::gen_gaussian(2.0, scale)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s).map_err(|e| Error::InvalidMechanism(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("mechanism serializes")
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Krr { k, eps0 } => {
                if k < 2 {
                    return Err(Error::InvalidMechanism(format!("k-RR needs k >= 2, got {k}")));
                }
                // eps0 = 0 makes every output equally likely: no index exists
                if !(eps0 > 0.0) || !eps0.is_finite() {
                    return Err(Error::InvalidMechanism(format!(
                        "k-RR needs finite eps0 > 0, got {eps0}"
                    )));
                }
            }
            Self::GenGaussian { beta, scale, domain } => {
                if !(1.0..=2.0).contains(&beta) {
                    return Err(Error::InvalidMechanism(format!("beta must lie in [1, 2], got {beta}")));
                }
                if !(scale > 0.0) || !scale.is_finite() {
                    return Err(Error::InvalidMechanism(format!("scale must be positive, got {scale}")));
                }
                if !(domain[0] < domain[1]) || !domain[0].is_finite() || !domain[1].is_finite() {
                    return Err(Error::InvalidMechanism(format!("invalid domain {domain:?}")));
                }
            }
        }
        Ok(())
    }

    /// `(p, q)` for k-RR.
    pub fn krr_pq(&self) -> Option<(f64, f64)> {
        match *self {
            Self::Krr { k, eps0 } => {
                let d = eps0.exp() + k as f64 - 1.0;
                Some((eps0.exp() / d, 1.0 / d))
            }
            _ => None,
        }
    }

    pub(crate) fn gg(&self) -> Option<GenGauss> {
        match *self {
            Self::GenGaussian { beta, scale, domain } => Some(GenGauss::new(beta, scale, domain[0], domain[1])),
            _ => None,
        }
    }

    /// Input domain as a closed interval (k-RR: `[1, k]`).
    pub fn domain(&self) -> (f64, f64) {
        match *self {
            Self::Krr { k, .. } => (1.0, k as f64),
            Self::GenGaussian { domain, .. } => (domain[0], domain[1]),
        }
    }

    /// Canonical pair: the first two symbols for k-RR, the domain endpoints otherwise.
    pub fn default_pair(&self) -> (f64, f64) {
        match *self {
            Self::Krr { .. } => (1.0, 2.0),
            Self::GenGaussian { domain, .. } => (domain[0], domain[1]),
        }
    }

    pub fn check_input(&self, x: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        let ok = match self {
            Self::Krr { .. } => x.fract() == 0.0 && x >= lo && x <= hi,
            Self::GenGaussian { .. } => x >= lo && x <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("input {x} outside the domain of {self:?}")))
        }
    }

    fn check_pair(&self, x1: f64, x1p: f64) -> Result<()> {
        self.check_input(x1)?;
        self.check_input(x1p)?;
        if x1 == x1p {
            return Err(Error::InvalidInput("x1 and x1' must differ".into()));
        }
        Ok(())
    }

    fn check_reference(&self, reference: ReferenceDistribution) -> Result<()> {
        match reference {
            ReferenceDistribution::Blanket => Ok(()),
            ReferenceDistribution::Local(x) => self.check_input(x),
        }
    }

    /// Blanket mass γ.
    pub fn blanket_mass(&self) -> f64 {
        match *self {
            Self::Krr { k, .. } => k as f64 * self.krr_pq().unwrap().1,
            Self::GenGaussian { .. } => self.gg().unwrap().gamma,
        }
    }

    /// Output density (or probability) `R_x(y)`.
    pub fn density(&self, x: f64, y: f64) -> f64 {
        match *self {
            Self::Krr { k, .. } => {
                let (p, q) = self.krr_pq().unwrap();
                if y.fract() != 0.0 || y < 1.0 || y > k as f64 {
                    0.0
                } else if y == x {
                    p
                } else {
                    q
                }
            }
            Self::GenGaussian { .. } => self.gg().unwrap().pdf(x, y),
        }
    }

    /// Blanket density `R_BG(y) = inf_x R_x(y) / γ`.
    pub fn blanket_density(&self, y: f64) -> f64 {
        match *self {
            Self::Krr { k, .. } => {
                if y.fract() != 0.0 || y < 1.0 || y > k as f64 {
                    0.0
                } else {
                    1.0 / k as f64
                }
            }
            Self::GenGaussian { .. } => self.gg().unwrap().ln_blanket(y).exp(),
        }
    }

    pub fn reference_density(&self, reference: ReferenceDistribution, y: f64) -> f64 {
        match reference {
            ReferenceDistribution::Blanket => self.blanket_density(y),
            ReferenceDistribution::Local(x) => self.density(x, y),
        }
    }

    /// Pointwise `l_ε(y)`.
    pub fn par_value(&self, x1: f64, x1p: f64, reference: ReferenceDistribution, eps: f64, y: f64) -> Result<f64> {
        self.check_pair(x1, x1p)?;
        self.check_reference(reference)?;
        match self {
            Self::Krr { .. } => {
                let r = self.reference_density(reference, y);
                if r <= 0.0 {
                    return Err(Error::Domain(format!("reference density vanishes at y = {y}")));
                }
                Ok((self.density(x1, y) - eps.exp() * self.density(x1p, y)) / r)
            }
            Self::GenGaussian { .. } => {
                let g = self.gg().unwrap();
                let par = gg_model(g, x1, x1p, reference, eps);
                Ok(par.value(y))
            }
        }
    }

    /// Distribution of `l_ε(Y)` with `Y` drawn from `law`.
    pub fn par_distribution(
        &self,
        x1: f64,
        x1p: f64,
        reference: ReferenceDistribution,
        eps: f64,
        law: SamplingLaw,
    ) -> Result<ParDistribution> {
        self.check_pair(x1, x1p)?;
        self.check_reference(reference)?;
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::InvalidInput(format!("eps must be finite and >= 0, got {eps}")));
        }
        match *self {
            Self::Krr { k, .. } => {
                let ee = eps.exp();
                let mut atoms = Vec::with_capacity(k as usize);
                for y in 1..=k {
                    let y = y as f64;
                    let r = self.reference_density(reference, y);
                    let v = (self.density(x1, y) - ee * self.density(x1p, y)) / r;
                    let w = match law {
                        SamplingLaw::Reference => r,
                        SamplingLaw::HypothesisX1 => self.density(x1, y),
                        SamplingLaw::HypothesisX1Prime => self.density(x1p, y),
                    };
                    atoms.push((v, w));
                }
                // renormalize away the last-ulp drift of the probabilities
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                for a in &mut atoms {
                    a.1 /= total;
                }
                Ok(ParDistribution::from_discrete(law, DiscreteDist::new(atoms)?))
            }
            Self::GenGaussian { .. } => {
                let g = self.gg().unwrap();
                let rloc = to_loc(reference);
                let lloc = match law {
                    SamplingLaw::Reference => rloc,
                    SamplingLaw::HypothesisX1 => Loc::At(x1),
                    SamplingLaw::HypothesisX1Prime => Loc::At(x1p),
                };
                let par = GgPar::new(g, x1, x1p, rloc, lloc, eps)?;
                let m = par.raw_moments(MOMENT_REL_TOL)?;
                Ok(ParDistribution::from_continuous(law, par, m))
            }
        }
    }

    /// `Var_ref(l_0(Y)) = ∫ (R_{x1} − R_{x1'})² / R_ref`.
    pub fn variance_l0(&self, x1: f64, x1p: f64, reference: ReferenceDistribution) -> Result<f64> {
        self.variance_l0_tol(x1, x1p, reference, MOMENT_REL_TOL)
    }

    pub fn variance_l0_tol(&self, x1: f64, x1p: f64, reference: ReferenceDistribution, rel_tol: f64) -> Result<f64> {
        self.check_pair(x1, x1p)?;
        self.check_reference(reference)?;
        let v = match *self {
            Self::Krr { k, .. } => (1..=k)
                .map(|y| {
                    let y = y as f64;
                    let d = self.density(x1, y) - self.density(x1p, y);
                    d * d / self.reference_density(reference, y)
                })
                .sum(),
            Self::GenGaussian { .. } => {
                let par = gg_model(self.gg().unwrap(), x1, x1p, reference, 0.0);
                par.integrate(|y| par.moment_integrand(2, y), rel_tol)?
            }
        };
        if !(v > 0.0) {
            return Err(Error::Domain(format!(
                "l_0 has zero variance for {self:?} (the pair is indistinguishable)"
            )));
        }
        Ok(v)
    }
}

pub(crate) fn to_loc(reference: ReferenceDistribution) -> Loc {
    match reference {
        ReferenceDistribution::Blanket => Loc::Blanket,
        ReferenceDistribution::Local(x) => Loc::At(x),
    }
}

/// `l_ε` with the reference law as sampling law, without piece detection.
fn gg_model(g: GenGauss, x1: f64, x1p: f64, reference: ReferenceDistribution, eps: f64) -> GgPar {
    let loc = to_loc(reference);
    GgPar::model_only(g, x1, x1p, loc, loc, eps)
}

pub fn blanket_mass(mech: &LocalRandomizer) -> f64 {
    mech.blanket_mass()
}

pub fn blanket_density(mech: &LocalRandomizer, y: f64) -> f64 {
    mech.blanket_density(y)
}

pub fn par_value(
    mech: &LocalRandomizer,
    x1: f64,
    x1p: f64,
    reference: ReferenceDistribution,
    eps: f64,
    y: f64,
) -> Result<f64> {
    mech.par_value(x1, x1p, reference, eps, y)
}

pub fn par_distribution(
    mech: &LocalRandomizer,
    x1: f64,
    x1p: f64,
    reference: ReferenceDistribution,
    eps: f64,
    law: SamplingLaw,
) -> Result<ParDistribution> {
    mech.par_distribution(x1, x1p, reference, eps, law)
}

pub fn variance_l0(mech: &LocalRandomizer, x1: f64, x1p: f64, reference: ReferenceDistribution) -> Result<f64> {
    mech.variance_l0(x1, x1p, reference)
}
