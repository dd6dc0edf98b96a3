use shuffle_accountant::accountant::*;
use shuffle_accountant::asymptotics::implied_alpha;
use shuffle_accountant::shuffle_index::worst_case_indices;
use shuffle_accountant::{Cdf, LocalRandomizer, ReferenceDistribution, SamplingLaw};

fn bounds_for(
    mech: &LocalRandomizer,
    pair: (f64, f64),
    reference: ReferenceDistribution,
    chi: f64,
    eps: f64,
    n: u64,
    eta: f64,
) -> DivergenceBounds {
    let alpha = implied_alpha(mech, pair.0, pair.1, reference, eps, n).unwrap();
    let budget = ErrorBudget::uniform(eta).unwrap();
    let (_, b, _) = run_accountant(
        mech,
        pair.0,
        pair.1,
        reference,
        eps,
        n,
        &budget,
        alpha,
        chi,
        &TuneOptions::default(),
    )
    .unwrap();
    b
}

#[test]
fn exact_enumeration_inside_certified_interval() {
    let mut widths = Vec::new();
    for k in [2u32, 3, 4] {
        for eps0 in [1.0, 2.0] {
            let mech = LocalRandomizer::krr(k, eps0).unwrap();
            let idx = worst_case_indices(&mech).unwrap();
            for eps in [0.05, 0.2, 0.5] {
                for n in [2u64, 5, 10, 20] {
                    let exact = exact_small_n(&mech, 1.0, 2.0, ReferenceDistribution::Blanket, eps, n).unwrap();
                    let b = bounds_for(
                        &mech,
                        (1.0, 2.0),
                        ReferenceDistribution::Blanket,
                        idx.chi_lo,
                        eps,
                        n,
                        0.1,
                    );
                    assert!(
                        b.lower <= exact && exact <= b.upper,
                        "k={k} eps0={eps0} eps={eps} n={n}: {exact} not in [{}, {}]",
                        b.lower,
                        b.upper
                    );
                    widths.push(b.relative_width());
                }
            }
        }
    }
    widths.sort_by(f64::total_cmp);
    eprintln!("median relative width {}", widths[widths.len() / 2]);
}

#[test]
fn local_reference_exact_inside_interval() {
    let mech = LocalRandomizer::krr(3, 2.0).unwrap();
    let idx = worst_case_indices(&mech).unwrap();
    let reference = ReferenceDistribution::Local(idx.ref_up);
    for (eps, n) in [(0.3, 10u64), (0.5, 20), (0.1, 15)] {
        let exact = exact_small_n(&mech, idx.pair_up.0, idx.pair_up.1, reference, eps, n).unwrap();
        let b = bounds_for(&mech, idx.pair_up, reference, idx.chi_up, eps, n, 0.05);
        assert!(
            b.lower <= exact && exact <= b.upper,
            "{exact} not in [{}, {}]",
            b.lower,
            b.upper
        );
    }
}

#[test]
fn monte_carlo_inside_certified_interval() {
    let cases: Vec<(LocalRandomizer, ReferenceDistribution, f64, u64)> = vec![
        (
            LocalRandomizer::krr(3, 2.0).unwrap(),
            ReferenceDistribution::Blanket,
            0.2,
            30,
        ),
        (
            LocalRandomizer::gen_gaussian(1.5, 0.5).unwrap(),
            ReferenceDistribution::Blanket,
            0.5,
            8,
        ),
        (
            LocalRandomizer::gen_gaussian(2.0, 0.4).unwrap(),
            ReferenceDistribution::Local(0.5),
            0.5,
            6,
        ),
    ];
    for (i, (mech, reference, eps, n)) in cases.into_iter().enumerate() {
        let idx = worst_case_indices(&mech).unwrap();
        let (pair, chi) = match reference {
            ReferenceDistribution::Blanket => (idx.pair_lo, idx.chi_lo),
            ReferenceDistribution::Local(_) => (idx.pair_up, idx.chi_up),
        };
        let b = bounds_for(&mech, pair, reference, chi, eps, n, 0.1);
        let mc = monte_carlo(&mech, pair.0, pair.1, reference, eps, n, 200_000, 7 + i as u64).unwrap();
        let slack = 4.0 * mc.std_error;
        assert!(
            b.lower - slack <= mc.estimate && mc.estimate <= b.upper + slack,
            "case {i}: {} ± {} vs [{}, {}]",
            mc.estimate,
            mc.std_error,
            b.lower,
            b.upper
        );
    }
}

/// Direct `O(n·len²)` convolution of the rounded thinned summand against the
/// FFT output.
#[test]
fn fft_pmf_matches_direct_convolution() {
    let mech = LocalRandomizer::krr(3, 2.0).unwrap();
    let (eps, n, h) = (0.1, 100u64, 0.01);
    let reference = ReferenceDistribution::Blanket;
    let gamma = mech.blanket_mass();
    let f = mech
        .par_distribution(1.0, 2.0, reference, eps, SamplingLaw::Reference)
        .unwrap();
    let atoms = f.atoms().unwrap().to_vec();
    let j_of = |v: f64| (v / h - 0.5).ceil() as i64;
    let j_lo = atoms.iter().map(|a| j_of(a.0)).min().unwrap().min(0) - 1;
    let j_hi = atoms.iter().map(|a| j_of(a.0)).max().unwrap().max(0) + 1;
    let params = FftParams::new(n, gamma, 0.0, j_lo as f64 * h, (j_hi - j_lo) as f64 * h, h, 1 << 16).unwrap();
    let pmf = calculate_pmf(&params, &f).unwrap();

    let width = (j_hi - j_lo + 1) as usize;
    let mut one = vec![0.0; width];
    one[(-j_lo) as usize] += 1.0 - gamma;
    for &(v, p) in &atoms {
        one[(j_of(v) - j_lo) as usize] += gamma * p;
    }
    let mut sum = vec![1.0];
    for _ in 0..n - 1 {
        let mut next = vec![0.0; sum.len() + width - 1];
        for (a, &x) in sum.iter().enumerate() {
            for (b, &y) in one.iter().enumerate() {
                next[a + b] += x * y;
            }
        }
        sum = next;
    }
    let offset = (n - 1) as i64 * j_lo;
    let mut tv = 0.0;
    let mut seen = 0.0;
    for (i, &p) in pmf.probs().iter().enumerate() {
        let value = pmf.z(i) + pmf.mu_s_di;
        let idx = (value / h).round() as i64 - offset;
        let q = if idx >= 0 && (idx as usize) < sum.len() {
            sum[idx as usize]
        } else {
            0.0
        };
        tv += (p - q).abs();
        seen += q;
    }
    tv += 1.0 - seen;
    assert!(0.5 * tv < 1e-10, "total variation {tv}");
}
