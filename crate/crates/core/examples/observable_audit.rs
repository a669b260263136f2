//! Full audit of a trained predictor using only the data: fixed-point
//! radius, refits tuned to twice that radius, and the excess-risk bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use riskwild::models::{FeatureMap, FunctionClass, LinearFeatureClass, RidgeTrainer};
use riskwild::risk::{excess_risk_bound, run_audit, AuditSettings, BoundInputs, BoundMode};
use riskwild::{rademacher, Dataset, LossSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (n, sigma, t) = (120, 0.5, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    let y: Vec<Vec<f64>> = x
        .iter()
        .map(|xi| {
            let e: f64 = rng.sample(StandardNormal);
            vec![xi[0] - 0.5 * xi[1] + sigma / 2.0 * e]
        })
        .collect();
    let ds = Dataset::new(x, y)?;
    let spec = LossSpec::squared();
    let class = FunctionClass::Linear(LinearFeatureClass::new(FeatureMap::Affine, 1));
    let trainer = RidgeTrainer::new(0.0, class.clone())?;

    let settings = AuditSettings::default();
    let core = run_audit(&trainer, &ds, &spec, &class, rademacher(n, 2), &settings)?;
    println!("fixed point r* = {:.5}", core.fixed_point.r);
    println!("noise scales rho1 {:.4}, rho2 {:.4}", core.out.rho1(), core.out.rho2());
    println!(
        "process check: W {:.5} <= {:.5}, T {:.5} <= {:.5} ({})",
        core.lemma1.w_at_r_diamond,
        core.lemma1.opt_diamond,
        core.lemma1.t_at_r_sharp,
        core.lemma1.opt_sharp,
        if core.lemma1.holds { "holds" } else { "violated" }
    );

    let bound = excess_risk_bound(
        BoundInputs {
            empirical_excess: None,
            training_error: Some(core.training_error),
            opt_diamond: core.opt_diamond,
            opt_sharp: core.opt_sharp,
            w: core.lemma1.w_at_r_diamond,
            t_process: core.lemma1.t_at_r_sharp,
            pilot_diamond: None,
            pilot_sharp: None,
            r: core.fixed_point.r,
            bias_norm: None,
            beta: spec.beta(),
            alpha: spec.alpha(),
            sigma,
            t,
            n,
            d: 1,
        },
        BoundMode::Observable,
        settings.variant,
    )?;
    println!("excess-risk bound {:.5} at confidence {:.4}", bound.total_bound, bound.confidence);
    for c in &bound.caveats {
        println!("  note: {c}");
    }
    Ok(())
}
