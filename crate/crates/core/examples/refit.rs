//! One doubly wild refit of a ridge fit: the base predictor, the two
//! refits and their distances from the base.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskwild::models::{FeatureMap, FunctionClass, LinearFeatureClass, RidgeTrainer};
use riskwild::wildresp::SolverSettings;
use riskwild::{doubly_wild_refit, Dataset, LossSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 60;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
    let y: Vec<Vec<f64>> = x
        .iter()
        .map(|xi| vec![0.5 - 1.5 * xi[0] + 0.3 * rng.random_range(-1.0..1.0)])
        .collect();
    let ds = Dataset::new(x, y)?;

    let class = FunctionClass::Linear(LinearFeatureClass::new(FeatureMap::Affine, 1));
    let trainer = RidgeTrainer::new(0.01, class)?;
    let spec = LossSpec::squared();

    for rho in [0.25, 1.0, 4.0] {
        let out = doubly_wild_refit(&trainer, &ds, &spec, rho, rho, 17, &SolverSettings::default())?;
        println!(
            "rho {rho:<5} ||f_diamond - f_hat||_n {:.5}  ||f_sharp - f_hat||_n {:.5}  max solve residual {:.1e}",
            out.r_diamond(),
            out.r_sharp(),
            out.max_solve_residual()
        );
    }
    Ok(())
}
