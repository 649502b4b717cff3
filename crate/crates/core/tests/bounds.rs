use proptest::prelude::*;
use rand::Rng;
use spiking_gcn::bounds::{analyze, empirical_tails};
use spiking_gcn::rng::{stream, Purpose};

fn slack(bound: f64, trials: usize) -> f64 {
    3.0 * (bound * (1.0 - bound) / trials as f64).sqrt()
}

#[test]
fn monte_carlo_tails_respect_bounds() {
    let trials = 10_000;
    for case in 0..100u64 {
        let mut rng = stream(17, Purpose::Custom(3), case, 0);
        let d = rng.gen_range(1..=30);
        let signed = case % 2 == 1;
        let lo = if signed { -0.5 } else { 0.0 };
        let psi: Vec<f64> = (0..d).map(|_| rng.gen_range(lo..0.5)).collect();
        let lambda: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let epsilon = rng.gen_range(0.01..1.0);
        let report = analyze(&psi, &lambda, epsilon).unwrap();
        let mut mc = stream(17, Purpose::Bounds, case, 0);
        let (lower, upper) = empirical_tails(&psi, &lambda, epsilon, trials, &mut mc).unwrap();
        let lb = report.lower_bound.sigma;
        let ub = report.upper_bound.sigma;
        assert!(lower <= lb + slack(lb, trials), "case {case}: lower {lower} > {lb}");
        assert!(upper <= ub + slack(ub, trials), "case {case}: upper {upper} > {ub}");
    }
}

#[test]
fn tighter_clip_lowers_clipped_bound() {
    let lambda = vec![0.4; 20];
    let bound = |clip: f64| {
        let psi: Vec<f64> = (0..20).map(|j| (0.05 * j as f64).min(clip)).collect();
        analyze(&psi, &lambda, 0.5).unwrap().failure_prob
    };
    assert!(bound(0.3) < bound(0.6));
    assert!(bound(0.1) < bound(0.3));
}

proptest! {
    #[test]
    fn bound_invariants(
        pairs in prop::collection::vec((-1.0f64..1.0, 0.0f64..=1.0), 1..40),
        epsilon in 1e-3f64..5.0,
    ) {
        let (psi, lambda): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let r = analyze(&psi, &lambda, epsilon).unwrap();
        prop_assert!(r.sigma <= r.sigma_prime);
        for tail in [r.lower_bound, r.upper_bound] {
            prop_assert!(tail.sigma <= tail.sigma_prime);
            prop_assert!(tail.sigma > 0.0 || epsilon * epsilon / (2.0 * r.sigma_prime) > 700.0);
            prop_assert!(tail.sigma_prime <= 1.0);
        }
        prop_assert_eq!(r.failure_prob, r.upper_bound.sigma_prime);
        prop_assert_eq!(analyze(&psi, &lambda, epsilon).unwrap(), r);
    }
}
