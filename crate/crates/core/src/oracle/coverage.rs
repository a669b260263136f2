//! Coverage experiments: how often the assembled bounds hold over repeated
//! outcome draws on a frozen design.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    decomposition_residual, derive_seed, empirical_excess_risk_values, oracle_optimism_values,
    true_excess_risk_values, true_optimism_values, OracleError, Scenario, ScenarioConfig,
    SymmetrizedProblems, TruthEstimate,
};
use crate::engine::{rademacher, BaseFit};
use crate::models::{empirical_norm_values, Dataset};
use crate::risk::{
    confidence_theorem1, confidence_theorem2, excess_risk_bound, pilot_errors,
    radius_bound_theorem2, run_audit, AuditCore, AuditSettings, BoundInputs, BoundMode,
    BoundReport, RadiusComponents, RadiusReport, SupSettings,
};

/// Absolute slack when comparing a bound with the quantity it bounds, so that
/// rounding at the `1e-16` level in degenerate scenarios cannot flip a result.
pub const COVERAGE_ABS_TOL: f64 = 1e-12;

/// Replication count below which coverage fractions are reported but flagged.
pub const RECOMMENDED_MIN_REPS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageSettings {
    pub reps: usize,
    pub t: f64,
    pub seed: u64,
    /// Monte Carlo size for the excess risk when no closed form applies.
    pub mc_samples: usize,
    pub audit: AuditSettings,
}

impl Default for CoverageSettings {
    fn default() -> Self {
        let mut audit = AuditSettings::default();
        // Closed-form suprema are exact for unbounded classes; skip the
        // ascent cross-check inside long experiments.
        audit.sup.certify = false;
        CoverageSettings {
            reps: 200,
            t: 2.0,
            seed: 0,
            mc_samples: 2000,
            audit,
        }
    }
}

/// One line of the per-replication table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub rep: usize,
    pub seed: u64,
    pub r_fixed_point: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub opt_diamond: f64,
    pub opt_sharp: f64,
    #[serde(rename = "B_diamond")]
    pub b_diamond: f64,
    #[serde(rename = "B_sharp")]
    pub b_sharp: f64,
    pub bound_thm1: f64,
    pub truth: f64,
    pub covered: bool,
    pub lemma1_ok: bool,
    pub rhat: f64,
    pub bound_thm2: f64,
    pub rhat_covered: bool,
}

impl CoverageRow {
    fn failed(rep: usize, seed: u64) -> Self {
        CoverageRow {
            rep,
            seed,
            r_fixed_point: f64::NAN,
            rho1: f64::NAN,
            rho2: f64::NAN,
            opt_diamond: f64::NAN,
            opt_sharp: f64::NAN,
            b_diamond: f64::NAN,
            b_sharp: f64::NAN,
            bound_thm1: f64::NAN,
            truth: f64::NAN,
            covered: false,
            lemma1_ok: false,
            rhat: f64::NAN,
            bound_thm2: f64::NAN,
            rhat_covered: false,
        }
    }
}

/// Per-replication quantities beyond the table columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepDiagnostics {
    pub rep: usize,
    pub empirical_excess: f64,
    pub training_error: f64,
    pub true_optimism: f64,
    pub oracle_optimism: f64,
    /// `(beta/alpha)(E_D - Opt*) - E_fix`; zero up to rounding for squared loss.
    pub decomposition_residual: f64,
    pub truth_std_error: f64,
    pub bias_norm: f64,
    pub r_diamond: f64,
    pub r_sharp: f64,
    pub w_at_r_diamond: f64,
    pub t_at_r_sharp: f64,
    pub lemma1_slack: f64,
    pub tune_gap: bool,
    pub fixed_point_saturated: bool,
    /// Stationarity residuals of the base fit and the two refits.
    pub trainer_stationarity: [f64; 3],
    pub trainer_tolerance: f64,
    pub max_solve_residual: f64,
    pub deviation_thm1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub scenario: ScenarioConfig,
    pub settings: CoverageSettings,
    pub well_specified: bool,
    pub reps: usize,
    pub failures: usize,
    /// Fraction of replications with `bound_thm1 >= truth` (failures count as misses).
    pub coverage_thm1: f64,
    pub floor_thm1: f64,
    /// Fraction with `rhat <= bound_thm2`; absent when not well specified.
    pub coverage_thm2: Option<f64>,
    pub floor_thm2: f64,
    pub lemma1_pass_rate: f64,
    pub below_recommended_reps: bool,
    pub alpha_is_mu: bool,
    pub passed: bool,
    pub rows: Vec<CoverageRow>,
    pub diagnostics: Vec<Option<RepDiagnostics>>,
    pub errors: Vec<(usize, String)>,
}

/// Everything one replication produced.
#[derive(Debug, Clone)]
pub struct Replication {
    pub row: CoverageRow,
    pub diagnostics: RepDiagnostics,
    pub bound_thm1: BoundReport,
    pub truth: TruthEstimate,
    /// Theorem-2 components at `r_hat`, when well specified.
    pub radius_thm2: Option<RadiusComponents>,
    pub dataset: Dataset,
    pub core: AuditCore,
}

/// Runs one replication end to end.
pub fn run_replication(
    scn: &Scenario,
    rep: usize,
    settings: &CoverageSettings,
) -> Result<(CoverageRow, RepDiagnostics), OracleError> {
    replicate(scn, rep, settings).map(|r| (r.row, r.diagnostics))
}

/// Runs one replication and keeps the datasets, refits and bound report.
pub fn replicate(
    scn: &Scenario,
    rep: usize,
    settings: &CoverageSettings,
) -> Result<Replication, OracleError> {
    let seed = derive_seed(settings.seed, rep as u64);
    let ds = scn.sample(derive_seed(seed, 1))?;
    let eps = rademacher(ds.n(), derive_seed(seed, 2));
    let mut audit = settings.audit;
    audit.solver = scn.solver;
    audit.sup.seed = derive_seed(seed, 3);
    let core = run_audit(&*scn.trainer, &ds, &scn.spec, &scn.class, eps, &audit)?;
    let out = &core.out;
    let base = &out.base;
    let spec = &scn.spec;
    let (n, d) = (ds.n(), ds.d());
    let r = core.fixed_point.r;
    let sigma = scn.noise.sigma;

    let (b_diamond, b_sharp) = pilot_errors(
        base,
        &out.eps,
        &scn.f_star_values,
        spec,
        r,
        &scn.class,
        audit.sup,
    )?;
    let bias_norm = empirical_norm_values(&scn.f_dagger_values, &scn.f_star_values)?;
    let empirical_excess = empirical_excess_risk_values(&base.fitted, &scn.f_star_values, &ds, spec)?;
    let truth = true_excess_risk_values(
        &base.fitted,
        &scn.f_star_values,
        spec,
        &scn.noise,
        settings.mc_samples,
        derive_seed(seed, 4),
        &scn.solver,
        false,
    )?;
    let opt_star = true_optimism_values(&base.fitted, &scn.f_star_values, &ds, spec)?;
    let opt_dagger =
        oracle_optimism_values(&base.fitted, &scn.f_dagger_values, &scn.f_star_values, &ds, spec)?;

    let bound1 = excess_risk_bound(
        BoundInputs {
            empirical_excess: Some(empirical_excess),
            training_error: Some(core.training_error),
            opt_diamond: core.opt_diamond,
            opt_sharp: core.opt_sharp,
            w: core.lemma1.w_at_r_diamond,
            t_process: core.lemma1.t_at_r_sharp,
            pilot_diamond: Some(b_diamond),
            pilot_sharp: Some(b_sharp),
            r,
            bias_norm: Some(bias_norm),
            beta: spec.beta(),
            alpha: spec.alpha(),
            sigma,
            t: settings.t,
            n,
            d,
        },
        BoundMode::Oracle,
        audit.variant,
    )?;

    let rhat = empirical_norm_values(&base.fitted, &scn.f_dagger_values)?;
    let (bound_thm2, radius_thm2) = if scn.well_specified {
        let w2 = core.w_process.value(2.0 * rhat)?.value;
        let t2 = core.t_process.value(2.0 * rhat)?.value;
        let (pd, ps) = pilot_errors(
            base,
            &out.eps,
            &scn.f_star_values,
            spec,
            rhat,
            &scn.class,
            audit.sup,
        )?;
        let b = radius_bound_theorem2(w2, t2, pd, ps, spec.alpha(), sigma, settings.t, n, d, true)?;
        let components = RadiusComponents {
            r_eval: rhat,
            w_2r: w2,
            t_2r: t2,
            pilot_diamond: pd,
            pilot_sharp: ps,
            deviation_theorem2: RadiusReport::deviation_theorem2(spec.alpha(), sigma, settings.t, n, d),
        };
        (b, Some(components))
    } else {
        (f64::NAN, None)
    };

    let row = CoverageRow {
        rep,
        seed,
        r_fixed_point: r,
        rho1: out.diamond.rho,
        rho2: out.sharp.rho,
        opt_diamond: core.opt_diamond,
        opt_sharp: core.opt_sharp,
        b_diamond,
        b_sharp,
        bound_thm1: bound1.total_bound,
        truth: truth.value,
        covered: bound1.total_bound >= truth.value - COVERAGE_ABS_TOL,
        lemma1_ok: core.lemma1.holds,
        rhat,
        bound_thm2,
        rhat_covered: rhat <= bound_thm2 + COVERAGE_ABS_TOL,
    };
    let diag = RepDiagnostics {
        rep,
        empirical_excess,
        training_error: core.training_error,
        true_optimism: opt_star,
        oracle_optimism: opt_dagger,
        decomposition_residual: decomposition_residual(truth.value, empirical_excess, opt_star, spec),
        truth_std_error: truth.std_error,
        bias_norm,
        r_diamond: out.r_diamond(),
        r_sharp: out.r_sharp(),
        w_at_r_diamond: core.lemma1.w_at_r_diamond,
        t_at_r_sharp: core.lemma1.t_at_r_sharp,
        lemma1_slack: core.lemma1.slack,
        tune_gap: core.tune_diamond.as_ref().is_some_and(|t| t.gap)
            || core.tune_sharp.as_ref().is_some_and(|t| t.gap),
        fixed_point_saturated: core.fixed_point.saturated,
        trainer_stationarity: out.trainer_stationarity(),
        trainer_tolerance: scn.trainer.tolerance(),
        max_solve_residual: out.max_solve_residual(),
        deviation_thm1: bound1.deviation,
    };
    Ok(Replication {
        row,
        diagnostics: diag,
        bound_thm1: bound1,
        truth,
        radius_thm2,
        dataset: ds,
        core,
    })
}

/// Runs `settings.reps` independent replications concurrently and aggregates.
pub fn coverage_experiment(
    scn: &Scenario,
    settings: &CoverageSettings,
) -> Result<CoverageReport, OracleError> {
    if settings.reps == 0 {
        return Err(OracleError::Config("coverage needs at least one replication".into()));
    }
    if !(settings.t > 0.0 && settings.t.is_finite()) {
        return Err(OracleError::Config(format!("t must be positive, got {}", settings.t)));
    }
    let results: Vec<_> = (0..settings.reps)
        .into_par_iter()
        .map(|rep| (rep, run_replication(scn, rep, settings)))
        .collect();

    let mut rows = Vec::with_capacity(settings.reps);
    let mut diagnostics = Vec::with_capacity(settings.reps);
    let mut errors = Vec::new();
    for (rep, res) in results {
        match res {
            Ok((row, diag)) => {
                rows.push(row);
                diagnostics.push(Some(diag));
            }
            Err(e) => {
                rows.push(CoverageRow::failed(rep, derive_seed(settings.seed, rep as u64)));
                diagnostics.push(None);
                errors.push((rep, e.to_string()));
            }
        }
    }
    let reps = settings.reps as f64;
    let frac = |f: fn(&CoverageRow) -> bool| rows.iter().filter(|r| f(r)).count() as f64 / reps;
    let coverage_thm1 = frac(|r| r.covered);
    let lemma1_pass_rate = frac(|r| r.lemma1_ok);
    let coverage_thm2 = scn.well_specified.then(|| frac(|r| r.rhat_covered));
    let floor_thm1 = confidence_theorem1(settings.t);
    let floor_thm2 = confidence_theorem2(settings.t);
    let passed = coverage_thm1 >= floor_thm1
        && lemma1_pass_rate == 1.0
        && coverage_thm2.is_none_or(|c| c >= floor_thm2);
    Ok(CoverageReport {
        scenario: scn.config.clone(),
        settings: *settings,
        well_specified: scn.well_specified,
        reps: settings.reps,
        failures: errors.len(),
        coverage_thm1,
        floor_thm1,
        coverage_thm2,
        floor_thm2,
        lemma1_pass_rate,
        below_recommended_reps: settings.reps < RECOMMENDED_MIN_REPS,
        alpha_is_mu: true,
        passed,
        rows,
        diagnostics,
        errors,
    })
}

/// Average of `Z_n(r)` and `U_n(2r)` over `redraws` fresh sign sequences and
/// noise copies on one replication, with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetrizationCheck {
    pub r: f64,
    pub mean_z: f64,
    pub se_z: f64,
    pub mean_u_2r: f64,
    pub se_u_2r: f64,
}

impl SymmetrizationCheck {
    /// Fits `f_hat` on `ds`, then redraws signs and noise copies.
    pub fn run(
        scn: &Scenario,
        ds: &Dataset,
        r: f64,
        redraws: usize,
        seed: u64,
    ) -> Result<Self, OracleError> {
        let base = BaseFit::train(&*scn.trainer, ds, &scn.spec)?;
        let sup = SupSettings {
            certify: false,
            ..SupSettings::default()
        };
        let mut zs = Vec::with_capacity(redraws);
        let mut us = Vec::with_capacity(redraws);
        for k in 0..redraws.max(2) {
            let draw_seed = derive_seed(seed, k as u64);
            let eps = rademacher(ds.n(), derive_seed(draw_seed, 0));
            let problems = SymmetrizedProblems::new(
                &base,
                &eps,
                &scn.f_star_values,
                &scn.f_dagger_values,
                &scn.spec,
                &scn.noise,
                &scn.class,
                derive_seed(draw_seed, 1),
                sup,
            )?;
            zs.push(problems.z.value(r)?.value);
            us.push(problems.u.value(2.0 * r)?.value);
        }
        let (mean_z, se_z) = mean_se(&zs);
        let (mean_u_2r, se_u_2r) = mean_se(&us);
        Ok(SymmetrizationCheck {
            r,
            mean_z,
            se_z,
            mean_u_2r,
            se_u_2r,
        })
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}
