//! Distributions of the privacy-amplification variable and the `Cdf` trait
//! the accountant consumes.

use serde::{Deserialize, Serialize};

use super::gen_gaussian::GgPar;
use crate::error::{Error, Result};

/// Law under which `Y` is drawn when forming `l_ε(Y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingLaw {
    Reference,
    HypothesisX1,
    HypothesisX1Prime,
}

/// Distribution function interface used by the FFT accountant.
///
/// Implementations must be right-continuous. The `*_many` / `bin_masses`
/// methods take ascending arguments so implementations can warm-start.
pub trait Cdf: Send + Sync {
    fn cdf(&self, u: f64) -> f64;

    fn sf(&self, u: f64) -> f64 {
        1.0 - self.cdf(u)
    }

    /// `P(a < X <= b)`.
    fn mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            0.0
        } else {
            (self.cdf(b) - self.cdf(a)).max(0.0)
        }
    }

    /// Finite list of atoms when the law is purely discrete.
    fn atoms(&self) -> Option<&[(f64, f64)]> {
        None
    }

    /// Locations where the CDF may jump (used to split quadrature).
    fn jumps(&self) -> Vec<f64> {
        self.atoms()
            .map(|a| a.iter().map(|p| p.0).collect())
            .unwrap_or_default()
    }

    /// `P(edges[i] < X <= edges[i+1])` for ascending `edges`.
    fn bin_masses(&self, edges: &[f64]) -> Vec<f64> {
        edges.windows(2).map(|w| self.mass(w[0], w[1])).collect()
    }

    /// Survival function at ascending points.
    fn sf_many(&self, us: &[f64]) -> Vec<f64> {
        us.iter().map(|&u| self.sf(u)).collect()
    }
}

/// Finite discrete law with sorted atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteDist {
    /// Sorts the atoms and merges equal locations. Probabilities must be
    /// non-negative and sum to 1 within 1e-12.
    pub fn new(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidInput("empty atom list".into()));
        }
        if atoms.iter().any(|&(v, p)| !v.is_finite() || !(p >= 0.0)) {
            return Err(Error::InvalidInput(
                "atoms must be finite with non-negative mass".into(),
            ));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (v, p) in atoms {
            match merged.last_mut() {
                Some(last) if (last.0 - v).abs() <= 1e-15 * v.abs().max(1e-300) => last.1 += p,
                _ => merged.push((v, p)),
            }
        }
        let total: f64 = merged.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("atom masses sum to {total}, not 1")));
        }
        Ok(Self { atoms: merged })
    }

    pub fn point_mass(v: f64) -> Self {
        Self { atoms: vec![(v, 1.0)] }
    }

    pub fn raw_moment(&self, k: i32) -> f64 {
        self.atoms.iter().map(|&(v, p)| p * v.powi(k)).sum()
    }
}

impl Cdf for DiscreteDist {
    fn cdf(&self, u: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.0 <= u)
            .map(|a| a.1)
            .sum::<f64>()
            .min(1.0)
    }

    fn sf(&self, u: f64) -> f64 {
        self.atoms.iter().filter(|a| a.0 > u).map(|a| a.1).sum::<f64>().min(1.0)
    }

    fn mass(&self, a: f64, b: f64) -> f64 {
        self.atoms.iter().filter(|x| x.0 > a && x.0 <= b).map(|x| x.1).sum()
    }

    fn atoms(&self) -> Option<&[(f64, f64)]> {
        Some(&self.atoms)
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Body {
    Discrete(DiscreteDist),
    Continuous(Box<GgPar>),
}

/// Distribution of `l_ε(Y)` under a sampling law.
#[derive(Debug, Clone)]
pub struct ParDistribution {
    pub law: SamplingLaw,
    pub mean: f64,
    pub variance: f64,
    /// Effective support; for continuous laws this is the range of `l_ε`
    /// over the region carrying all but ~1e-300 of the mass.
    pub support: (f64, f64),
    /// Raw moments `E[X], E[X^2], E[X^3]`.
    pub raw_moments: [f64; 3],
    pub(crate) body: Body,
}

impl ParDistribution {
    pub(crate) fn from_discrete(law: SamplingLaw, d: DiscreteDist) -> Self {
        let m = [d.raw_moment(1), d.raw_moment(2), d.raw_moment(3)];
        let atoms = d.atoms().expect("discrete");
        let support = (atoms[0].0, atoms[atoms.len() - 1].0);
        Self {
            law,
            mean: m[0],
            variance: (m[1] - m[0] * m[0]).max(0.0),
            support,
            raw_moments: m,
            body: Body::Discrete(d),
        }
    }

    pub(crate) fn from_continuous(law: SamplingLaw, par: GgPar, raw_moments: [f64; 3]) -> Self {
        let support = par.value_range();
        let m = raw_moments;
        Self {
            law,
            mean: m[0],
            variance: (m[1] - m[0] * m[0]).max(0.0),
            support,
            raw_moments: m,
            body: Body::Continuous(Box::new(par)),
        }
    }

    /// Exact PMF for discrete mechanisms.
    pub fn pmf(&self) -> Option<&[(f64, f64)]> {
        self.atoms()
    }

    /// Number of monotone pieces of `y -> l_ε(y)` (1 for discrete laws).
    pub fn monotone_pieces(&self) -> usize {
        match &self.body {
            Body::Discrete(_) => 1,
            Body::Continuous(p) => p.piece_count(),
        }
    }
}

impl Cdf for ParDistribution {
    fn cdf(&self, u: f64) -> f64 {
        match &self.body {
            Body::Discrete(d) => d.cdf(u),
            Body::Continuous(p) => p.cdf(u),
        }
    }

    fn sf(&self, u: f64) -> f64 {
        match &self.body {
            Body::Discrete(d) => d.sf(u),
            Body::Continuous(p) => p.sf(u),
        }
    }

    fn mass(&self, a: f64, b: f64) -> f64 {
        match &self.body {
            Body::Discrete(d) => d.mass(a, b),
            Body::Continuous(p) => {
                if b <= a {
                    0.0
                } else {
                    p.bin_masses(&[a, b])[0]
                }
            }
        }
    }

    fn atoms(&self) -> Option<&[(f64, f64)]> {
        match &self.body {
            Body::Discrete(d) => d.atoms(),
            Body::Continuous(_) => None,
        }
    }

    fn jumps(&self) -> Vec<f64> {
        match &self.body {
            Body::Discrete(d) => d.jumps(),
            Body::Continuous(p) => p.flat_values(),
        }
    }

    fn bin_masses(&self, edges: &[f64]) -> Vec<f64> {
        match &self.body {
            Body::Discrete(d) => d.bin_masses(edges),
            Body::Continuous(p) => p.bin_masses(edges),
        }
    }

    fn sf_many(&self, us: &[f64]) -> Vec<f64> {
        match &self.body {
            Body::Discrete(d) => d.sf_many(us),
            Body::Continuous(p) => p.sf_many(us),
        }
    }
}
