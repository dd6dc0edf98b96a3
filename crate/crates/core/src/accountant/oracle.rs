//! Independent reference values for testing: exact enumeration for small n
//! and a seeded Monte-Carlo estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp1, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanisms::{LocalRandomizer, ReferenceDistribution};

/// Largest `n` accepted by [`exact_small_n`].
pub const EXACT_MAX_N: u64 = 20;
const MC_CHUNKS: u64 = 64;

/// Exact `(1/(nγ))·E[(Σ_{i<=M} l_ε(Y_i))_+]` with `M ~ Bin(n, γ)` for k-RR,
/// by enumerating `M` and the multinomial counts of the distinct values of
/// `l_ε`. With a local reference `γ = 1` and `M = n`.
pub fn exact_small_n(
    mech: &LocalRandomizer,
    x1: f64,
    x1p: f64,
    reference: ReferenceDistribution,
    eps: f64,
    n: u64,
) -> Result<f64> {
    let LocalRandomizer::Krr { k, .. } = *mech else {
        return Err(Error::InvalidMechanism("exact enumeration needs k-RR".into()));
    };
    if n > EXACT_MAX_N {
        return Err(Error::Size(format!(
            "exact enumeration supports n <= {EXACT_MAX_N}, got {n}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("n must be >= 1".into()));
    }
    mech.par_value(x1, x1p, reference, eps, x1)?;
    let ee = eps.exp();
    let mut vals: Vec<(f64, f64)> = Vec::new();
    for y in 1..=k {
        let y = y as f64;
        let r = mech.reference_density(reference, y);
        let v = (mech.density(x1, y) - ee * mech.density(x1p, y)) / r;
        match vals.iter_mut().find(|a| a.0 == v) {
            Some(a) => a.1 += r,
            None => vals.push((v, r)),
        }
    }
    let total: f64 = vals.iter().map(|a| a.1).sum();
    for a in &mut vals {
        a.1 /= total;
    }
    let (gamma, blanket) = match reference {
        ReferenceDistribution::Blanket => (mech.blanket_mass(), true),
        ReferenceDistribution::Local(_) => (1.0, false),
    };
    let fact: Vec<f64> = (0..=n)
        .scan(1.0, |f, i| {
            if i > 0 {
                *f *= i as f64;
            }
            Some(*f)
        })
        .collect();
    let mut acc = 0.0;
    let ms: Vec<u64> = if blanket { (0..=n).collect() } else { vec![n] };
    for m in ms {
        let w = if blanket {
            fact[n as usize] / (fact[m as usize] * fact[(n - m) as usize])
                * gamma.powi(m as i32)
                * (1.0 - gamma).powi((n - m) as i32)
        } else {
            1.0
        };
        if w == 0.0 {
            continue;
        }
        let mut counts = vec![0u64; vals.len()];
        acc += w * positive_part_expectation(&vals, m, 0, &mut counts, &fact);
    }
    Ok(acc / (n as f64 * gamma))
}

/// `E[(Σ_{i<=m} X_i)_+]` over multinomial counts, recursing on the category.
fn positive_part_expectation(vals: &[(f64, f64)], left: u64, cat: usize, counts: &mut [u64], fact: &[f64]) -> f64 {
    if cat == vals.len() - 1 {
        counts[cat] = left;
        let m: u64 = counts.iter().sum();
        let mut prob = fact[m as usize];
        let mut sum = 0.0;
        for (&c, &(v, p)) in counts.iter().zip(vals) {
            prob *= p.powi(c as i32) / fact[c as usize];
            sum += c as f64 * v;
        }
        return prob * sum.max(0.0);
    }
    let mut acc = 0.0;
    for c in 0..=left {
        counts[cat] = c;
        acc += positive_part_expectation(vals, left - c, cat + 1, counts, fact);
    }
    acc
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: u64,
}

/// Estimates `Pr[l(Y_1) + S > 0] − e^ε·Pr[l(Y_1') + S > 0]` with
/// `Y_1 ~ R_{x1}`, `Y_1' ~ R_{x1'}` and `S` the sum of `Bin(n−1, γ)` draws of
/// `l_ε` under the reference. Draws are split into fixed seeded streams, so
/// the result does not depend on the thread count.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo(
    mech: &LocalRandomizer,
    x1: f64,
    x1p: f64,
    reference: ReferenceDistribution,
    eps: f64,
    n: u64,
    samples: u64,
    seed: u64,
) -> Result<McEstimate> {
    if n < 1 || samples < 2 {
        return Err(Error::InvalidInput("need n >= 1 and at least two samples".into()));
    }
    mech.par_value(x1, x1p, reference, eps, x1)?;
    let sampler = Sampler::new(mech, x1, x1p, reference, eps)?;
    let ee = eps.exp();
    let per = samples / MC_CHUNKS;
    let extra = samples % MC_CHUNKS;
    let parts: Vec<(f64, f64)> = (0..MC_CHUNKS)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let count = per + u64::from(chunk < extra);
            let (mut s1, mut s2) = (0.0, 0.0);
            let thin = Binomial::new(n - 1, sampler.gamma()).expect("valid binomial");
            for _ in 0..count {
                let m = thin.sample(&mut rng);
                let s = sampler.sum_reference(m, &mut rng);
                let a = f64::from(u8::from(sampler.draw(Law::X1, &mut rng) + s > 0.0));
                let b = f64::from(u8::from(sampler.draw(Law::X1p, &mut rng) + s > 0.0));
                let v = a - ee * b;
                s1 += v;
                s2 += v * v;
            }
            (s1, s2)
        })
        .collect();
    let (s1, s2) = parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let nf = samples as f64;
    let mean = s1 / nf;
    let var = ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
    Ok(McEstimate {
        estimate: mean,
        std_error: (var / nf).sqrt(),
        samples,
    })
}

#[derive(Clone, Copy)]
enum Law {
    Reference,
    X1,
    X1p,
}

/// Draws of `l_ε(Y)` written directly from the densities, independent of
/// the `ParDistribution` machinery.
enum Sampler {
    Krr {
        values: Vec<f64>,
        reference: Vec<f64>,
        x1: Vec<f64>,
        x1p: Vec<f64>,
        gamma: f64,
    },
    Gg {
        beta: f64,
        scale: f64,
        lo: f64,
        hi: f64,
        reference: ReferenceDistribution,
        x1: f64,
        x1p: f64,
        ee: f64,
        noise: Gamma<f64>,
        gamma: f64,
    },
}

/// `|t|^β` with the common exponents spelled out.
fn pow_beta(t: f64, beta: f64) -> f64 {
    let t = t.abs();
    if beta == 2.0 {
        t * t
    } else if beta == 1.0 {
        t
    } else if beta == 1.5 {
        t * t.sqrt()
    } else {
        t.powf(beta)
    }
}

impl Sampler {
    fn new(mech: &LocalRandomizer, x1: f64, x1p: f64, reference: ReferenceDistribution, eps: f64) -> Result<Self> {
        let gamma = match reference {
            ReferenceDistribution::Blanket => mech.blanket_mass(),
            ReferenceDistribution::Local(_) => 1.0,
        };
        Ok(match *mech {
            LocalRandomizer::Krr { k, .. } => {
                let ys: Vec<f64> = (1..=k).map(f64::from).collect();
                let reference: Vec<f64> = ys.iter().map(|&y| mech.reference_density(reference, y)).collect();
                let p1: Vec<f64> = ys.iter().map(|&y| mech.density(x1, y)).collect();
                let p1p: Vec<f64> = ys.iter().map(|&y| mech.density(x1p, y)).collect();
                let values = (0..ys.len())
                    .map(|i| (p1[i] - eps.exp() * p1p[i]) / reference[i])
                    .collect();
                Sampler::Krr {
                    values,
                    reference,
                    x1: p1,
                    x1p: p1p,
                    gamma,
                }
            }
            LocalRandomizer::GenGaussian { beta, scale, domain } => Sampler::Gg {
                beta,
                scale,
                lo: domain[0],
                hi: domain[1],
                reference,
                x1,
                x1p,
                ee: eps.exp(),
                noise: Gamma::new(1.0 + 1.0 / beta, 1.0).map_err(|e| Error::InvalidMechanism(e.to_string()))?,
                gamma,
            },
        })
    }

    fn gamma(&self) -> f64 {
        match self {
            Sampler::Krr { gamma, .. } | Sampler::Gg { gamma, .. } => *gamma,
        }
    }

    fn sum_reference<R: Rng>(&self, m: u64, rng: &mut R) -> f64 {
        match self {
            Sampler::Krr { values, reference, .. } => {
                // multinomial counts by sequential binomials
                let mut left = m;
                let mut rest = 1.0;
                let mut s = 0.0;
                for (i, (&v, &p)) in values.iter().zip(reference).enumerate() {
                    if left == 0 {
                        break;
                    }
                    let cnt = if i + 1 == values.len() || p >= rest {
                        left
                    } else {
                        Binomial::new(left, (p / rest).clamp(0.0, 1.0))
                            .expect("valid binomial")
                            .sample(rng)
                    };
                    s += cnt as f64 * v;
                    left -= cnt;
                    rest -= p;
                }
                s
            }
            Sampler::Gg { .. } => (0..m).map(|_| self.draw(Law::Reference, rng)).sum(),
        }
    }

    /// Noise radius `r` with density ∝ exp(−(r/scale)^β) on r > 0. Uses
    /// `(r/scale)^β ~ Gamma(1/β) = Gamma(1 + 1/β)·U^β`, with `noise` sampling
    /// Gamma(1 + 1/β), and exact shortcuts at β = 1 and β = 2.
    fn radius<R: Rng>(&self, rng: &mut R) -> f64 {
        let Sampler::Gg { beta, scale, noise, .. } = self else {
            unreachable!("radius is only drawn for the generalized Gaussian")
        };
        if *beta == 2.0 {
            let z: f64 = rng.sample(StandardNormal);
            scale * z.abs() * std::f64::consts::FRAC_1_SQRT_2
        } else if *beta == 1.0 {
            let e: f64 = rng.sample(Exp1);
            scale * e
        } else {
            let u: f64 = rng.random();
            let g = noise.sample(rng);
            let root = if *beta == 1.5 {
                g.cbrt() * g.cbrt()
            } else {
                g.powf(1.0 / beta)
            };
            scale * root * u
        }
    }

    fn draw<R: Rng>(&self, law: Law, rng: &mut R) -> f64 {
        match self {
            Sampler::Krr {
                values,
                reference,
                x1,
                x1p,
                ..
            } => {
                let probs = match law {
                    Law::Reference => reference,
                    Law::X1 => x1,
                    Law::X1p => x1p,
                };
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                values[values.len() - 1]
            }
            Sampler::Gg {
                beta,
                scale,
                lo,
                hi,
                reference,
                x1,
                x1p,
                ee,
                gamma,
                ..
            } => {
                let radius = |rng: &mut R| self.radius(rng);
                let y = match law {
                    Law::X1 | Law::X1p => {
                        let x = if matches!(law, Law::X1) { *x1 } else { *x1p };
                        let r = radius(rng);
                        if rng.random::<bool>() {
                            x + r
                        } else {
                            x - r
                        }
                    }
                    Law::Reference => match reference {
                        ReferenceDistribution::Local(x) => {
                            let r = radius(rng);
                            if rng.random::<bool>() {
                                x + r
                            } else {
                                x - r
                            }
                        }
                        ReferenceDistribution::Blanket => {
                            // each half carries mass 1/2: below the midpoint the
                            // density follows the far endpoint `hi`, above it `lo`
                            let half = 0.5 * (hi - lo);
                            let left = rng.random::<bool>();
                            loop {
                                let r = radius(rng);
                                if r > half {
                                    break if left { hi - r } else { lo + r };
                                }
                            }
                        }
                    },
                };
                let cb = pow_beta(*scale, *beta);
                let e = |x: f64| pow_beta(y - x, *beta) / cb;
                let (base, mult) = match reference {
                    ReferenceDistribution::Blanket => {
                        let far = if y < 0.5 * (lo + hi) { *hi } else { *lo };
                        (e(far), *gamma)
                    }
                    ReferenceDistribution::Local(x) => (e(*x), 1.0),
                };
                mult * ((base - e(*x1)).exp() - ee * (base - e(*x1p)).exp())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::special::gamma;

    /// `E[(r/scale)^β] = 1/β` and `E[r/scale] = Γ(2/β)/Γ(1/β)` for the noise radius.
    #[test]
    fn gen_gaussian_radius_moments() {
        for beta in [1.0, 1.5, 1.8, 2.0] {
            let mech = LocalRandomizer::gen_gaussian(beta, 0.7).unwrap();
            let s = Sampler::new(&mech, 0.0, 1.0, ReferenceDistribution::Local(0.0), 0.1).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let count = 400_000;
            let (mut m1, mut mb) = (0.0, 0.0);
            for _ in 0..count {
                let r = s.radius(&mut rng) / 0.7;
                m1 += r;
                mb += r.powf(beta);
            }
            let (m1, mb) = (m1 / count as f64, mb / count as f64);
            assert!((mb - 1.0 / beta).abs() < 0.01, "beta {beta}: {mb}");
            let want = gamma(2.0 / beta) / gamma(1.0 / beta);
            assert!((m1 - want).abs() < 0.01, "beta {beta}: {m1} vs {want}");
        }
    }

    #[test]
    fn draws_have_the_identity_mean() {
        // E_ref[l] = 1 − e^ε under a local reference
        for beta in [1.0, 1.5, 2.0] {
            let mech = LocalRandomizer::gen_gaussian(beta, 0.6).unwrap();
            let eps = 0.3;
            let s = Sampler::new(&mech, 0.0, 1.0, ReferenceDistribution::Local(0.5), eps).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let count = 400_000;
            let mean = (0..count).map(|_| s.draw(Law::Reference, &mut rng)).sum::<f64>() / count as f64;
            assert!((mean - (1.0 - eps.exp())).abs() < 0.02, "beta {beta}: {mean}");
        }
    }
}
