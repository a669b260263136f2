//! Monte Carlo check of both bounds on a synthetic well-specified scenario.
//! Pass the number of replications as the first argument (default 50).

use riskwild::oracle::{coverage_experiment, CoverageSettings, Scenario, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reps = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(50);
    let scn = Scenario::build(&ScenarioConfig::default())?;
    let settings = CoverageSettings {
        reps,
        seed: 2024,
        ..CoverageSettings::default()
    };
    let report = coverage_experiment(&scn, &settings)?;
    println!(
        "{} reps: excess-risk coverage {:.3} (floor {:.4}), radius coverage {} (floor {:.4})",
        report.reps,
        report.coverage_thm1,
        report.floor_thm1,
        report.coverage_thm2.map_or("n/a".into(), |c| format!("{c:.3}")),
        report.floor_thm2
    );
    let worst = report
        .rows
        .iter()
        .map(|r| r.truth / r.bound_thm1)
        .fold(0.0, f64::max);
    println!("largest truth / bound ratio {worst:.4}; process check pass rate {:.3}", report.lemma1_pass_rate);
    Ok(())
}
