use riskwild::engine::BaseFit;
use riskwild::models::{FunctionClass, RidgeTrainer};
use riskwild::risk::{tune_rho_for_radius, TuneSettings};
use riskwild::wildresp::{Side, SolverSettings};
use riskwild::{rademacher, Dataset, LossSpec};

// Finds the noise scale whose refit lands at a chosen distance from the
// base fit. With ridge shrinkage s = 1/(1 + n lambda) the radius is
// rho * s * ||g_tilde||_n, so the answer can be checked by hand.
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = Dataset::new(vec![vec![0.0], vec![1.0]], vec![vec![1.0], vec![-1.0]])?;
    let spec = LossSpec::squared();
    let trainer = RidgeTrainer::new(0.5, FunctionClass::Unconstrained)?;
    let base = BaseFit::train(&trainer, &ds, &spec)?;
    let eps = rademacher(ds.n(), 1);

    for target in [0.25, 0.5, 2.0] {
        for side in [Side::Diamond, Side::Sharp] {
            let r = tune_rho_for_radius(
                &base,
                &trainer,
                &spec,
                &eps,
                target,
                side,
                &TuneSettings::default(),
                &SolverSettings::default(),
            )?;
            println!(
                "target {target:<5} {side:?}: rho {:.8} (expected {:.8}), {} evaluations",
                r.rho,
                2.0 * target,
                r.table.len()
            );
        }
    }
    Ok(())
}
