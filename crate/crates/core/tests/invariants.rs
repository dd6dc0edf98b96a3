use proptest::prelude::*;

use shuffle_accountant::accountant::*;
use shuffle_accountant::asymptotics::{epsilon_curve_refined_at, reference_mass, refined_divergence};
use shuffle_accountant::shuffle_index::worst_case_indices;
use shuffle_accountant::{LocalRandomizer, ReferenceDistribution};

const BLANKET: ReferenceDistribution = ReferenceDistribution::Blanket;

// Blanket mass of a location family on [0, 1] is twice the noise tail
// beyond the half-width 1/2. At β = 2 the noise sd is scale/√2, so the mass
// is erfc(0.5/scale); reference values from a 30-digit erfc.
#[test]
fn gaussian_blanket_mass_matches_erfc() {
    let cases = [
        (0.3, 0.018_422_125_454_099_006),
        (1.0, 0.479_500_122_186_953_5),
        (2.0 * std::f64::consts::SQRT_2, 0.802_587_348_634_152_6),
        (7.5, 0.924_886_018_613_606_2),
    ];
    for (scale, want) in cases {
        let got = reference_mass(&LocalRandomizer::gen_gaussian(2.0, scale).unwrap(), BLANKET);
        assert!((got - want).abs() <= 1e-14 * want, "scale {scale}: {got} vs {want}");
    }
}

#[test]
fn invalid_mechanisms_are_rejected() {
    use shuffle_accountant::Error::InvalidMechanism;
    for (k, eps0) in [(1, 1.0), (3, 0.0), (3, -1.0), (3, f64::NAN), (3, f64::INFINITY)] {
        assert!(
            matches!(LocalRandomizer::krr(k, eps0), Err(InvalidMechanism(_))),
            "k={k} eps0={eps0}"
        );
    }
    for (beta, scale, domain) in [
        (0.5, 1.0, [0.0, 1.0]),
        (2.5, 1.0, [0.0, 1.0]),
        (2.0, 0.0, [0.0, 1.0]),
        (2.0, 1.0, [1.0, 1.0]),
    ] {
        assert!(
            LocalRandomizer::gen_gaussian_on(beta, scale, domain).is_err(),
            "{beta} {scale} {domain:?}"
        );
    }
    assert!(LocalRandomizer::from_json(r#"{"kind":"krr","k":1,"eps0":1.0}"#).is_err());
    let m = LocalRandomizer::gen_gaussian_on(1.5, 2.0, [-1.0, 3.0]).unwrap();
    assert_eq!(LocalRandomizer::from_json(&m.to_json()).unwrap(), m);
    let d = LocalRandomizer::from_json(r#"{"kind":"gen_gaussian","beta":2.0,"scale":1.0}"#).unwrap();
    assert_eq!(d.domain(), (0.0, 1.0));
}

#[test]
fn laplace_blanket_mass_matches_closed_tail() {
    for scale in [0.1, 1.0, 4.0] {
        let m = LocalRandomizer::gen_gaussian(1.0, scale).unwrap();
        let want = (-0.5 / scale).exp();
        let got = reference_mass(&m, BLANKET);
        assert!((got - want).abs() <= 1e-13 * want, "scale {scale}: {got} vs {want}");
    }
}

#[test]
fn tuned_parameters_meet_their_budget() {
    let budget = ErrorBudget::new(0.05, 0.02, 0.03, 0.01).unwrap();
    let cases = [
        (LocalRandomizer::krr(3, 2.0).unwrap(), 2_000u64),
        (LocalRandomizer::krr(5, 1.0).unwrap(), 500),
        (
            LocalRandomizer::gen_gaussian(2.0, 2.0 * std::f64::consts::SQRT_2).unwrap(),
            300,
        ),
        (LocalRandomizer::gen_gaussian(1.0, 1.5).unwrap(), 300),
    ];
    for (m, n) in cases {
        let idx = worst_case_indices(&m).unwrap();
        let eps = epsilon_curve_refined_at(&m, &idx, 1.0, n).unwrap();
        let (x1, x1p) = idx.pair_lo;
        let target = refined_divergence(&m, x1, x1p, BLANKET, eps, n).unwrap();
        let p = tune_params(&m, x1, x1p, BLANKET, eps, n, &budget, 1.0, idx.chi_lo).unwrap();
        let b = divergence_bounds(&m, x1, x1p, BLANKET, eps, &p).unwrap();
        assert!(b.e_trunc <= budget.eta_trunc * target, "{m:?}: e_trunc {}", b.e_trunc);
        assert!(b.e_disc <= budget.eta_disc * target, "{m:?}: e_disc {}", b.e_disc);
        assert!(b.e_alias <= budget.eta_alias * target, "{m:?}: e_alias {}", b.e_alias);
        assert!(p.grid_size.is_power_of_two());
        if matches!(m, LocalRandomizer::Krr { .. }) {
            assert_eq!(b.e_trunc, 0.0);
        }
    }
}

#[test]
fn worst_case_widths_scale_inversely_with_eta() {
    let m = LocalRandomizer::krr(3, 2.0).unwrap();
    let idx = worst_case_indices(&m).unwrap();
    let (x1, x1p) = idx.pair_lo;
    let opts = TuneOptions {
        align_atoms: false,
        ..TuneOptions::default()
    };
    let h = |eta: f64| {
        let b = ErrorBudget::uniform(eta).unwrap();
        tune_params_with(&m, x1, x1p, BLANKET, 0.1, 1000, &b, 1.0, idx.chi_lo, &opts)
            .unwrap()
            .h
    };
    let r = h(0.1) / h(0.05);
    assert!((1.6..=2.6).contains(&r), "h ratio {r}");
}

// Sums of aligned atoms sit on a lattice; a lattice point inside the ±c band
// around a threshold would put its whole mass between the bounds.
#[test]
fn aligned_lattice_avoids_threshold_atoms() {
    let m = LocalRandomizer::krr(3, 2.0).unwrap();
    let idx = worst_case_indices(&m).unwrap();
    let (y1, y1p) = idx.pair_up;
    let reference = ReferenceDistribution::Local(idx.ref_up);
    let b = ErrorBudget::uniform(0.01).unwrap();
    let eps = 6.907_782_631_420_918e-2;
    let (rec, _, _) = run_accountant(
        &m,
        y1,
        y1p,
        reference,
        eps,
        10_000,
        &b,
        1.0,
        idx.chi_up,
        &TuneOptions::default(),
    )
    .unwrap();
    assert!(rec.relative_width() < 1e-3, "[{}, {}]", rec.lower, rec.upper);
}

#[test]
fn pmf_is_a_distribution() {
    let m = LocalRandomizer::gen_gaussian(1.5, 2.0).unwrap();
    let idx = worst_case_indices(&m).unwrap();
    let (x1, x1p) = idx.pair_lo;
    let b = ErrorBudget::uniform(0.1).unwrap();
    let p = tune_params(&m, x1, x1p, BLANKET, 0.3, 200, &b, 1.0, idx.chi_lo).unwrap();
    let f = m
        .par_distribution(x1, x1p, BLANKET, 0.3, shuffle_accountant::SamplingLaw::Reference)
        .unwrap();
    let pmf = calculate_pmf(&p, &f).unwrap();
    let probs = pmf.probs();
    assert_eq!(probs.len(), p.grid_size);
    let total: f64 = probs.iter().sum();
    assert!((total - 1.0).abs() < 1e-9, "total {total}");
    assert!(probs.iter().all(|&q| q >= 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bounds_are_ordered_and_contain_exact(
        k in 2u32..=5,
        eps0 in 0.3f64..3.0,
        eps in 0.01f64..0.6,
        n in 2u64..=12,
        eta in 0.02f64..0.3,
    ) {
        let m = LocalRandomizer::krr(k, eps0).unwrap();
        let idx = worst_case_indices(&m).unwrap();
        let (x1, x1p) = idx.pair_lo;
        let exact = exact_small_n(&m, x1, x1p, BLANKET, eps, n).unwrap();
        let b = ErrorBudget::uniform(eta).unwrap();
        match run_accountant(&m, x1, x1p, BLANKET, eps, n, &b, 1.0, idx.chi_lo, &TuneOptions::default()) {
            Ok((rec, _, _)) => {
                prop_assert!(0.0 <= rec.lower && rec.lower <= rec.upper && rec.upper <= 1.0);
                prop_assert!(rec.lower <= exact && exact <= rec.upper, "{exact} outside [{}, {}]", rec.lower, rec.upper);
            }
            // tiny targets can exceed the grid cap; that is reported, never wrong
            Err(shuffle_accountant::Error::InfeasibleBudget { .. }) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn exact_divergence_decreases_in_eps(k in 2u32..=4, eps0 in 0.3f64..3.0, n in 2u64..=10, e in 0.0f64..1.0) {
        let m = LocalRandomizer::krr(k, eps0).unwrap();
        let a = exact_small_n(&m, 1.0, 2.0, BLANKET, e, n).unwrap();
        let b = exact_small_n(&m, 1.0, 2.0, BLANKET, e + 0.1, n).unwrap();
        prop_assert!(b <= a + 1e-15);
    }
}
