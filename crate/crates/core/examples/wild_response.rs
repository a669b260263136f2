//! Pseudo-outcomes whose loss gradient hits a prescribed target, solved in
//! closed form and numerically.

use riskwild::losses::{LogPartition, LossSpec, RegularizedExpFamilyLoss};
use riskwild::wildresp::{solve_wild_response, MethodChoice, SolverSettings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let z = [0.4, -1.2];
    let y = [1.0, 0.0];

    // Squared loss: grad1 = 2 (z - y), so the target is reached exactly.
    let sq = LossSpec::squared();
    let g = sq.grad1(&z, &y)?;
    let rho = 0.5;
    let target: Vec<f64> = g.iter().map(|gi| (1.0 + 2.0 * rho) * gi).collect();
    let closed = solve_wild_response(&sq, &z, &target, &y, &SolverSettings::default())?;
    println!("squared: y = {:?} via {:?}, residual {:.1e}", closed.y, closed.method, closed.residual_norm);

    // A log-partition loss without a usable inverse: Newton, then the
    // proximal-point fallback.
    let ef = LossSpec::new(RegularizedExpFamilyLoss::new(LogPartition::SoftplusSum, 1.5)?)
        .without_closed_form();
    let target = [0.3, -0.8];
    for method in [MethodChoice::Newton, MethodChoice::Ppa] {
        let settings = SolverSettings {
            method,
            max_iter: 500,
            ..SolverSettings::default()
        };
        let r = solve_wild_response(&ef, &z, &target, &y, &settings)?;
        println!(
            "softplus-sum {method:?}: y = [{:.6}, {:.6}], {} iterations, residual {:.1e}",
            r.y[0], r.y[1], r.iterations, r.residual_norm
        );
    }
    Ok(())
}
