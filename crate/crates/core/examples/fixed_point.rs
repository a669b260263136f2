//! The fixed-point radius `r*` from the localized suprema. For the
//! unconstrained class the suprema are linear in `r` and the fixed point has
//! the closed form `8 ||g_tilde||_n / alpha`.

use riskwild::engine::BaseFit;
use riskwild::models::{rms, FunctionClass, RidgeTrainer};
use riskwild::risk::{fixed_point_radius, processes, SupSettings};
use riskwild::{rademacher, Dataset, LossSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
    let y: Vec<Vec<f64>> = (0..8).map(|i| vec![(i as f64 * 0.7).sin()]).collect();
    let ds = Dataset::new(x, y)?;
    let spec = LossSpec::squared();
    let class = FunctionClass::Unconstrained;

    for lambda in [0.0, 0.05, 0.5] {
        let trainer = RidgeTrainer::new(lambda, class.clone())?;
        let base = BaseFit::train(&trainer, &ds, &spec)?;
        let (w, t) = processes(&base, &rademacher(ds.n(), 9), &class, SupSettings::default())?;
        let fp = fixed_point_radius(
            |r| w.value(r).map(|v| v.value),
            |r| t.value(r).map(|v| v.value),
            spec.alpha(),
            1e6,
            1e-10,
        )?;
        let closed = 8.0 * rms(&base.g_tilde) / spec.alpha();
        println!("lambda {lambda:<5} r* {:.8}  closed form {closed:.8}", fp.r);
    }
    Ok(())
}
