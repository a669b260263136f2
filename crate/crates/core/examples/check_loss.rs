//! Regularity checks for the built-in losses: smoothness, strong convexity
//! and the outcome-side conditions, plus a finite-difference gradient test.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskwild::losses::{
    check_assumption1, grad_fd_check, LogPartition, LossSpec, QuadraticFormLoss,
    RegularizedExpFamilyLoss,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let d = 2;
    let losses = vec![
        LossSpec::squared(),
        LossSpec::new(RegularizedExpFamilyLoss::new(LogPartition::SoftplusSum, 0.5)?),
        LossSpec::new(QuadraticFormLoss::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            DVector::from_vec(vec![0.1, -0.3]),
        )?),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for spec in &losses {
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()
        };
        let report = check_assumption1(spec, || (draw(&mut rng), draw(&mut rng), draw(&mut rng)), 500);
        let fd = (0..200)
            .map(|_| grad_fd_check(spec, &draw(&mut rng), &draw(&mut rng), 1e-5))
            .fold(0.0, f64::max);
        println!(
            "{:<10} beta {:<6} alpha {:<6} passed {:<5} fd error {fd:.1e}",
            spec.name(),
            spec.beta(),
            spec.alpha(),
            report.passed
        );
    }
    Ok(())
}
