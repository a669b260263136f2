//! Computable pieces of the excess-risk certificate.
//!
//! - [`sup`]: localized empirical-process suprema.
//! - Wild optimisms and pilot errors (this module).
//! - [`bound`]: the excess-risk bound assembled from those pieces.
//! - [`radius`]: data-driven bounds on `||f_hat - f_dagger||_n`.
//! - [`tune`]: choosing noise scales that hit a target refit radius.
//! - [`audit`]: the pipeline tying the pieces together for one dataset.

pub mod audit;
pub mod bound;
pub mod radius;
pub mod sup;
pub mod tune;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{BaseFit, EngineError, SideRefit, WildRefitOutput};
use crate::losses::{LossError, LossSpec};
use crate::models::{empirical_norm_values, FunctionClass, ModelError};
use crate::wildresp::Side;

pub use audit::{run_audit, AuditCore, AuditSettings, RhoPolicy, TuneSummary};
pub use bound::{confidence_theorem1, excess_risk_bound, BoundInputs, BoundReport, BoundMode};
pub use radius::{
    confidence_theorem2, fixed_point_radius, radius_bound_corollary, radius_bound_theorem2,
    CorollaryBound, FixedPoint, RadiusComponents, RadiusReport,
};
pub use sup::{sup_process, SupProblem, SupSettings, SupValue};
pub use tune::{tune_rho_for_radius, ScanPhase, ScanRow, TuneResult, TuneSettings};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("radius must be finite and nonnegative, got {0}")]
    NegativeRadius(f64),
    #[error("the ball of radius {r} is empty: the center is {distance} away from the class")]
    EmptyBall { r: f64, distance: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("missing oracle piece `{0}` outside observable mode")]
    MissingPiece(&'static str),
    #[error("radius bounds of this form require a well-specified setting")]
    NotWellSpecified,
    #[error("no noise scale in the bracket reaches the target radius ({} evaluations)", table.len())]
    NoBracket { table: Vec<ScanRow> },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Normalization of the quadratic term of the wild optimism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimismVariant {
    /// `beta / (4 rho) ||f_side - f_hat||_n^2`; the version under which the
    /// process bound holds deterministically.
    #[default]
    ProofConsistent,
    /// `beta / (4 rho n) ||f_side - f_hat||_n^2`.
    Literal,
}

/// Wild optimism of one refit:
/// `beta/(4 rho) ||f_s - f_hat||_n^2 + (1/(2 rho n)) sum_i [l(f_hat(x_i), y_i^s) - l(f_s(x_i), y_i^s)]`.
pub fn wild_optimism(
    base: &BaseFit,
    refit: &SideRefit,
    spec: &LossSpec,
    variant: OptimismVariant,
) -> Result<f64, RiskError> {
    let n = base.n() as f64;
    let rho = refit.rho;
    let dist = empirical_norm_values(&refit.values, &base.fitted)?;
    let mut quad = spec.beta() / (4.0 * rho) * dist * dist;
    if variant == OptimismVariant::Literal {
        quad /= n;
    }
    let mut gap = 0.0;
    for ((fh, fs), ys) in base.fitted.iter().zip(&refit.values).zip(refit.dataset.y()) {
        gap += spec.value(fh, ys)? - spec.value(fs, ys)?;
    }
    Ok(quad + gap / (2.0 * rho * n))
}

pub fn wild_optimism_diamond(
    out: &WildRefitOutput,
    spec: &LossSpec,
    variant: OptimismVariant,
) -> Result<f64, RiskError> {
    wild_optimism(&out.base, &out.diamond, spec, variant)
}

pub fn wild_optimism_sharp(
    out: &WildRefitOutput,
    spec: &LossSpec,
    variant: OptimismVariant,
) -> Result<f64, RiskError> {
    wild_optimism(&out.base, &out.sharp, spec, variant)
}

/// Directions `eps_i g_i` (diamond) or `-eps_i g_i` (sharp).
pub fn signed_gradients(base: &BaseFit, eps: &[f64], side: Side) -> Vec<Vec<f64>> {
    let s = match side {
        Side::Diamond => 1.0,
        Side::Sharp => -1.0,
    };
    base.g_tilde
        .iter()
        .zip(eps)
        .map(|(g, e)| g.iter().map(|v| s * e * v).collect())
        .collect()
}

/// The processes `W_n` and `T_n` around `f_hat`, ready for evaluation at any radius.
pub fn processes(
    base: &BaseFit,
    eps: &[f64],
    class: &FunctionClass,
    settings: SupSettings,
) -> Result<(SupProblem, SupProblem), RiskError> {
    let xs = base.dataset.x();
    let w = SupProblem::new(
        class,
        xs,
        &base.fitted,
        &signed_gradients(base, eps, Side::Diamond),
        settings,
    )?;
    let t = SupProblem::new(
        class,
        xs,
        &base.fitted,
        &signed_gradients(base, eps, Side::Sharp),
        settings,
    )?;
    Ok((w, t))
}

/// `W_n(r) = sup_{f in B_r(f_hat)} (1/n) sum_i <eps_i g_i, f(x_i) - f_hat(x_i)>`.
pub fn w_n(
    out: &WildRefitOutput,
    r: f64,
    class: &FunctionClass,
    settings: SupSettings,
) -> Result<SupValue, RiskError> {
    processes(&out.base, &out.eps, class, settings)?.0.value(r)
}

/// `T_n(r)`, the same supremum with directions `-eps_i g_i`.
pub fn t_n(
    out: &WildRefitOutput,
    r: f64,
    class: &FunctionClass,
    settings: SupSettings,
) -> Result<SupValue, RiskError> {
    processes(&out.base, &out.eps, class, settings)?.1.value(r)
}

/// Pilot errors `(B_diamond, B_sharp)`: suprema over `B_{2r}(f_hat)` of the
/// process driven by `eps_i (grad1 l(f*(x_i), y_i) - g_i)`, and its negation.
pub fn pilot_errors(
    base: &BaseFit,
    eps: &[f64],
    f_star_values: &[Vec<f64>],
    spec: &LossSpec,
    r: f64,
    class: &FunctionClass,
    settings: SupSettings,
) -> Result<(f64, f64), RiskError> {
    let ds = &base.dataset;
    if f_star_values.len() != ds.n() || eps.len() != ds.n() {
        return Err(RiskError::InvalidInput(
            "pilot errors need one f* value and one sign per sample".into(),
        ));
    }
    let mut v = Vec::with_capacity(ds.n());
    for ((fs, y), (g, e)) in f_star_values
        .iter()
        .zip(ds.y())
        .zip(base.g_tilde.iter().zip(eps))
    {
        let gs = spec.grad1(fs, y)?;
        v.push(gs.iter().zip(g).map(|(a, b)| e * (a - b)).collect::<Vec<f64>>());
    }
    let neg: Vec<Vec<f64>> = v.iter().map(|r| r.iter().map(|x| -x).collect()).collect();
    let xs = ds.x();
    let bd = SupProblem::new(class, xs, &base.fitted, &v, settings)?.value(2.0 * r)?;
    let bs = SupProblem::new(class, xs, &base.fitted, &neg, settings)?.value(2.0 * r)?;
    Ok((bd.value, bs.value))
}

/// Per-run check of the deterministic process bound: `W_n(r_diamond) <=
/// Opt_diamond + slack` and `T_n(r_sharp) <= Opt_sharp + slack`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProcessBoundCheck {
    pub w_at_r_diamond: f64,
    pub t_at_r_sharp: f64,
    pub opt_diamond: f64,
    pub opt_sharp: f64,
    pub slack: f64,
    pub holds: bool,
}

pub fn check_process_bound(
    out: &WildRefitOutput,
    spec: &LossSpec,
    class: &FunctionClass,
    trainer_tol: f64,
    settings: SupSettings,
) -> Result<ProcessBoundCheck, RiskError> {
    let (w, t) = processes(&out.base, &out.eps, class, settings)?;
    let wv = w.value(out.r_diamond())?.value;
    let tv = t.value(out.r_sharp())?.value;
    let od = wild_optimism_diamond(out, spec, OptimismVariant::ProofConsistent)?;
    let os = wild_optimism_sharp(out, spec, OptimismVariant::ProofConsistent)?;
    let slack = trainer_tol + 1e-8;
    Ok(ProcessBoundCheck {
        w_at_r_diamond: wv,
        t_at_r_sharp: tv,
        opt_diamond: od,
        opt_sharp: os,
        slack,
        holds: wv <= od + slack && tv <= os + slack,
    })
}
