//! The default audit pipeline: fixed-point radius first, then both noise
//! scales tuned so the refits land at twice that radius, then the wild
//! optimisms and the deterministic process-bound check.

use serde::{Deserialize, Serialize};

use super::tune::{tune_rho_for_radius, ScanRow, TuneSettings};
use super::{
    fixed_point_radius, processes, wild_optimism, FixedPoint, OptimismVariant, ProcessBoundCheck,
    RiskError, SupProblem, SupSettings,
};
use crate::engine::{refit_side, BaseFit, WildRefitOutput};
use crate::losses::LossSpec;
use crate::models::{empirical_risk_values, FunctionClass, Trainer};
use crate::wildresp::{Side, SolverSettings};

/// How the two noise scales are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy")]
pub enum RhoPolicy {
    /// Tune each side so its refit radius equals `2 r*`.
    #[default]
    FixedPoint,
    Fixed { rho1: f64, rho2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditSettings {
    pub r_max: f64,
    pub fixed_point_tol: f64,
    pub rho: RhoPolicy,
    pub tune: TuneSettings,
    pub sup: SupSettings,
    pub solver: SolverSettings,
    pub variant: OptimismVariant,
}

impl Default for AuditSettings {
    fn default() -> Self {
        AuditSettings {
            r_max: 1e6,
            fixed_point_tol: 1e-8,
            rho: RhoPolicy::FixedPoint,
            tune: TuneSettings::default(),
            sup: SupSettings::default(),
            solver: SolverSettings::default(),
            variant: OptimismVariant::ProofConsistent,
        }
    }
}

/// Outcome of tuning one side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneSummary {
    pub side: Side,
    pub rho: f64,
    pub target: f64,
    pub achieved: f64,
    pub gap: bool,
    pub table: Vec<ScanRow>,
}

#[derive(Debug, Clone)]
pub struct AuditCore {
    pub out: WildRefitOutput,
    pub fixed_point: FixedPoint,
    /// Radius both refits were tuned to (`2 r*`), when tuning was used.
    pub target_radius: Option<f64>,
    pub tune_diamond: Option<TuneSummary>,
    pub tune_sharp: Option<TuneSummary>,
    pub opt_diamond: f64,
    pub opt_sharp: f64,
    pub lemma1: ProcessBoundCheck,
    /// `W_n` and `T_n` around `f_hat`, reusable at any radius.
    pub w_process: SupProblem,
    pub t_process: SupProblem,
    /// `(1/n) sum_i l(f_hat(x_i), y_i)`.
    pub training_error: f64,
}

/// Runs the pipeline on one dataset with the given Rademacher signs.
pub fn run_audit<T: Trainer + ?Sized>(
    trainer: &T,
    ds: &crate::models::Dataset,
    spec: &LossSpec,
    class: &FunctionClass,
    eps: Vec<f64>,
    settings: &AuditSettings,
) -> Result<AuditCore, RiskError> {
    let base = BaseFit::train(trainer, ds, spec)?;
    if eps.len() != base.n() {
        return Err(RiskError::InvalidInput(format!(
            "{} signs for {} samples",
            eps.len(),
            base.n()
        )));
    }
    let (w_process, t_process) = processes(&base, &eps, class, settings.sup)?;
    let fixed_point = fixed_point_radius(
        |s| w_process.value(s).map(|v| v.value),
        |s| t_process.value(s).map(|v| v.value),
        spec.alpha(),
        settings.r_max,
        settings.fixed_point_tol,
    )?;

    let (diamond, sharp, target_radius, tune_diamond, tune_sharp) = match settings.rho {
        RhoPolicy::FixedPoint => {
            let target = 2.0 * fixed_point.r;
            let tune = |side| {
                tune_rho_for_radius(
                    &base,
                    trainer,
                    spec,
                    &eps,
                    target,
                    side,
                    &settings.tune,
                    &settings.solver,
                )
            };
            let (d, s) = rayon::join(|| tune(Side::Diamond), || tune(Side::Sharp));
            let (d, s) = (d?, s?);
            let summary = |r: &super::TuneResult| TuneSummary {
                side: r.side,
                rho: r.rho,
                target: r.target,
                achieved: r.achieved,
                gap: r.gap,
                table: r.table.clone(),
            };
            let (sd, ss) = (summary(&d), summary(&s));
            (d.refit, s.refit, Some(target), Some(sd), Some(ss))
        }
        RhoPolicy::Fixed { rho1, rho2 } => {
            let refit = |side, rho| refit_side(&base, trainer, spec, &eps, side, rho, &settings.solver);
            let (d, s) = rayon::join(|| refit(Side::Diamond, rho1), || refit(Side::Sharp, rho2));
            (d?, s?, None, None, None)
        }
    };

    let opt_diamond = wild_optimism(&base, &diamond, spec, settings.variant)?;
    let opt_sharp = wild_optimism(&base, &sharp, spec, settings.variant)?;
    let w_at = w_process.value(diamond.radius)?.value;
    let t_at = t_process.value(sharp.radius)?.value;
    // The deterministic check always uses the proof-consistent normalization.
    let (od_pc, os_pc) = match settings.variant {
        OptimismVariant::ProofConsistent => (opt_diamond, opt_sharp),
        OptimismVariant::Literal => (
            wild_optimism(&base, &diamond, spec, OptimismVariant::ProofConsistent)?,
            wild_optimism(&base, &sharp, spec, OptimismVariant::ProofConsistent)?,
        ),
    };
    let slack = trainer.tolerance() + 1e-8;
    let lemma1 = ProcessBoundCheck {
        w_at_r_diamond: w_at,
        t_at_r_sharp: t_at,
        opt_diamond: od_pc,
        opt_sharp: os_pc,
        slack,
        holds: w_at <= od_pc + slack && t_at <= os_pc + slack,
    };
    let training_error = empirical_risk_values(spec, &base.fitted, &base.dataset)?;

    Ok(AuditCore {
        out: WildRefitOutput {
            base,
            eps,
            diamond,
            sharp,
            seed: None,
        },
        fixed_point,
        target_radius,
        tune_diamond,
        tune_sharp,
        opt_diamond,
        opt_sharp,
        lemma1,
        w_process,
        t_process,
        training_error,
    })
}
