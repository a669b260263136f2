use proptest::prelude::*;

use riskwild::engine::BaseFit;
use riskwild::losses::{LogPartition, LossSpec, RegularizedExpFamilyLoss};
use riskwild::models::{rms, FunctionClass, RidgeTrainer};
use riskwild::risk::{SupProblem, SupSettings};
use riskwild::wildresp::{solve_wild_response, SolverSettings};
use riskwild::{doubly_wild_refit, Dataset};

fn coord() -> impl Strategy<Value = f64> {
    -4.0..4.0f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wild_response_reaches_its_target(
        z in prop::collection::vec(coord(), 2),
        g in prop::collection::vec(-2.0..2.0f64, 2),
        mu in 0.2..3.0f64,
    ) {
        let spec = LossSpec::new(RegularizedExpFamilyLoss::new(LogPartition::SoftplusSum, mu).unwrap());
        let rep = solve_wild_response(&spec, &z, &g, &[0.0, 0.0], &SolverSettings::default()).unwrap();
        let back = spec.grad1(&z, &rep.y).unwrap();
        for (b, t) in back.iter().zip(&g) {
            prop_assert!((b - t).abs() <= 1e-6, "{back:?} vs {g:?}");
        }
    }

    #[test]
    fn unconstrained_supremum_is_linear_in_the_radius(
        v in prop::collection::vec(prop::collection::vec(coord(), 2), 1..12),
        r in 0.0..10.0f64,
    ) {
        let n = v.len();
        let xs: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let center = vec![vec![0.0, 0.0]; n];
        let p = SupProblem::new(&FunctionClass::Unconstrained, &xs, &center, &v, SupSettings::default()).unwrap();
        let got = p.value(r).unwrap().value;
        prop_assert!((got - r * rms(&v)).abs() <= 1e-12 * (1.0 + got.abs()));
        prop_assert!(got >= 0.0);
    }

    #[test]
    fn ridge_refit_radius_is_proportional_to_rho(
        y in prop::collection::vec(coord(), 2..10),
        lambda in 0.01..2.0f64,
        rho in 0.01..5.0f64,
        seed in any::<u64>(),
    ) {
        let n = y.len();
        let ds = Dataset::new(
            (0..n).map(|i| vec![i as f64]).collect(),
            y.iter().map(|&v| vec![v]).collect(),
        ).unwrap();
        let spec = LossSpec::squared();
        let trainer = RidgeTrainer::new(lambda, FunctionClass::Unconstrained).unwrap();
        let out = doubly_wild_refit(&trainer, &ds, &spec, rho, rho, seed, &SolverSettings::default()).unwrap();
        let base = BaseFit::train(&trainer, &ds, &spec).unwrap();
        let expected = rho * rms(&base.g_tilde) / (1.0 + n as f64 * lambda);
        for got in [out.r_diamond(), out.r_sharp()] {
            prop_assert!((got - expected).abs() <= 1e-9 * (1.0 + expected), "{got} vs {expected}");
        }
    }
}
