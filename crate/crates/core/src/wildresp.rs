//! Wild responses: pseudo-outcomes `y` solving `grad1 l(z, y) = g_target`.
//!
//! Three solvers are tried in order. The loss's closed-form inverse comes
//! first, then damped Newton on `F(y) = grad1 l(z, y) - g_target` with a
//! finite-difference Jacobian. The proximal point algorithm on the monotone
//! operator `y -> g_target - grad1 l(z, y)` is the fallback.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::{LossError, LossSpec};
use crate::models::{Dataset, ModelError, Predictor};
use crate::vecops::{norm, sub};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WildRespError {
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("noise scale rho must be positive and finite, got {0}")]
    InvalidRho(f64),
    #[error("Rademacher signs must be +1 or -1, found {0}")]
    InvalidSign(f64),
    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),
    #[error("no root found; best residual {best_residual:.3e} after {iterations} iterations")]
    NotConverged {
        best_residual: f64,
        iterations: usize,
        trace: Vec<f64>,
    },
    #[error("{side} response for sample {index}: {source}")]
    Sample {
        index: usize,
        side: Side,
        source: Box<WildRespError>,
    },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Which of the two perturbed datasets a response belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Diamond,
    Sharp,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Diamond => "diamond",
            Side::Sharp => "sharp",
        })
    }
}

/// One gradient equation to solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WildTarget {
    pub i: usize,
    pub z: Vec<f64>,
    pub g_target: Vec<f64>,
    pub side: Side,
    pub rho: f64,
    pub epsilon_i: f64,
}

impl WildTarget {
    /// Builds the target for sample `i` from its gradient `g_tilde`.
    pub fn new(i: usize, z: Vec<f64>, g_tilde: &[f64], side: Side, rho: f64, epsilon_i: f64) -> Self {
        let factor = match side {
            Side::Diamond => 1.0 - 2.0 * rho * epsilon_i,
            Side::Sharp => 1.0 + 2.0 * rho * epsilon_i,
        };
        WildTarget {
            i,
            z,
            g_target: g_tilde.iter().map(|g| factor * g).collect(),
            side,
            rho,
            epsilon_i,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    ClosedForm,
    Newton,
    Ppa,
}

/// Which solvers may be used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodChoice {
    /// Closed form, then Newton, then PPA.
    #[default]
    Auto,
    /// Newton, with PPA as fallback.
    Newton,
    /// PPA only.
    Ppa,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub method: MethodChoice,
    pub schedule: PpaSchedule,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-8,
            max_iter: 100,
            method: MethodChoice::Auto,
            schedule: PpaSchedule::default(),
        }
    }
}

impl SolverSettings {
    fn validate(&self) -> Result<(), WildRespError> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(WildRespError::InvalidSettings(format!(
                "tol must be positive and max_iter at least 1 (got {}, {})",
                self.tol, self.max_iter
            )));
        }
        self.schedule.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub y: Vec<f64>,
    /// `||grad1 l(z, y) - g_target||`.
    pub residual_norm: f64,
    pub iterations: usize,
    pub method: SolveMethod,
    /// False when roots may be non-unique; `y` is then the one reached from
    /// the canonical starting point.
    pub strictly_monotone: bool,
}

/// Diamond targets `(1 - 2 rho1 eps_i) g_i` and sharp targets
/// `(1 + 2 rho2 eps_i) g_i`.
pub fn wild_target_gradients(
    g_tilde: &[Vec<f64>],
    eps: &[f64],
    rho1: f64,
    rho2: f64,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), WildRespError> {
    if g_tilde.len() != eps.len() {
        return Err(WildRespError::LengthMismatch {
            what: "signs",
            expected: g_tilde.len(),
            got: eps.len(),
        });
    }
    for rho in [rho1, rho2] {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(WildRespError::InvalidRho(rho));
        }
    }
    if let Some(&e) = eps.iter().find(|e| e.abs() != 1.0) {
        return Err(WildRespError::InvalidSign(e));
    }
    let scaled = |factor: f64, g: &[f64]| g.iter().map(|v| factor * v).collect::<Vec<f64>>();
    let diamond = g_tilde
        .iter()
        .zip(eps)
        .map(|(g, e)| scaled(1.0 - 2.0 * rho1 * e, g))
        .collect();
    let sharp = g_tilde
        .iter()
        .zip(eps)
        .map(|(g, e)| scaled(1.0 + 2.0 * rho2 * e, g))
        .collect();
    Ok((diamond, sharp))
}

/// Outcome of [`damped_newton`].
#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub y: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The Jacobian was singular or the line search stalled.
    pub broke_down: bool,
}

/// Forward-difference Jacobian of `f` at `y`, step `1e-6 (1 + ||y||)`.
fn fd_jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: &F, y: &[f64], fy: &[f64]) -> DMatrix<f64> {
    let h = 1e-6 * (1.0 + norm(y));
    let d = y.len();
    let mut jac = DMatrix::zeros(fy.len(), d);
    let mut yp = y.to_vec();
    for k in 0..d {
        yp[k] = y[k] + h;
        let fp = f(&yp);
        for j in 0..fy.len() {
            jac[(j, k)] = (fp[j] - fy[j]) / h;
        }
        yp[k] = y[k];
    }
    jac
}

/// Damped Newton on a square system `f(y) = 0` with a finite-difference
/// Jacobian and backtracking on `||f||`.
pub fn damped_newton<F: Fn(&[f64]) -> Vec<f64>>(
    f: F,
    y0: &[f64],
    tol: f64,
    max_iter: usize,
) -> NewtonOutcome {
    let mut y = y0.to_vec();
    let mut fy = f(&y);
    let mut res = norm(&fy);
    let mut iterations = 0;
    let mut broke_down = false;
    while res > tol && iterations < max_iter {
        iterations += 1;
        let jac = fd_jacobian(&f, &y, &fy);
        let step = match jac.lu().solve(&(-DVector::from_column_slice(&fy))) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => {
                broke_down = true;
                break;
            }
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = y.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let ft = f(&trial);
            let rt = norm(&ft);
            if rt.is_finite() && rt <= (1.0 - 1e-4 * t) * res {
                y = trial;
                fy = ft;
                res = rt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            broke_down = true;
            break;
        }
    }
    NewtonOutcome {
        converged: res <= tol,
        y,
        residual_norm: res,
        iterations,
        broke_down,
    }
}

/// Step-size and inexactness schedules for the proximal point algorithm:
/// `c_k = c0 * c_growth^k` (nondecreasing) and `delta_k = delta0 * delta_ratio^k`
/// (summable).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpaSchedule {
    pub c0: f64,
    pub c_growth: f64,
    pub delta0: f64,
    pub delta_ratio: f64,
}

impl Default for PpaSchedule {
    /// `c_k = 1`, `delta_k = 2^-k`.
    fn default() -> Self {
        PpaSchedule {
            c0: 1.0,
            c_growth: 1.0,
            delta0: 1.0,
            delta_ratio: 0.5,
        }
    }
}

impl PpaSchedule {
    pub fn c(&self, k: usize) -> f64 {
        self.c0 * self.c_growth.powi(k as i32)
    }

    pub fn delta(&self, k: usize) -> f64 {
        self.delta0 * self.delta_ratio.powi(k as i32)
    }

    fn validate(&self) -> Result<(), WildRespError> {
        let ok = self.c0 > 0.0
            && self.c_growth >= 1.0
            && self.delta0 > 0.0
            && (0.0..1.0).contains(&self.delta_ratio)
            && [self.c0, self.c_growth, self.delta0].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(WildRespError::InvalidSettings(format!(
                "PPA schedule needs c0 > 0, c_growth >= 1, delta0 > 0, 0 <= delta_ratio < 1: {self:?}"
            )))
        }
    }
}

/// One accepted outer step of the proximal point algorithm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PpaStep {
    pub k: usize,
    pub c: f64,
    pub delta: f64,
    pub inner_iterations: usize,
    /// `||S_k(z_{k+1})||` with `S_k(z) = op(z) + (z - z_k) / c_k`.
    pub inner_residual: f64,
    pub step_norm: f64,
    /// Whether `||S_k(z_{k+1})|| <= (delta_k / c_k) ||z_{k+1} - z_k||` held.
    /// Late steps can miss it only when both sides sit at rounding level.
    pub rule_met: bool,
    /// `||op(z_{k+1})||`.
    pub op_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PpaReport {
    pub y: Vec<f64>,
    pub residual_norm: f64,
    pub outer_iterations: usize,
    pub steps: Vec<PpaStep>,
    pub all_rules_met: bool,
}

const PPA_INNER_MAX: usize = 50;

/// Proximal point iteration for a root of the monotone operator `op`.
///
/// Each outer step approximately evaluates the resolvent
/// `(I + c_k op)^{-1}(z_k)` by running damped Newton on `S_k` until the
/// relative inexactness rule holds.
pub fn ppa_solve<O: Fn(&[f64]) -> Vec<f64>>(
    op: O,
    z0: &[f64],
    schedule: &PpaSchedule,
    tol: f64,
    max_outer: usize,
) -> Result<PpaReport, WildRespError> {
    schedule.validate()?;
    let mut z = z0.to_vec();
    let mut op_norm = norm(&op(&z));
    let mut steps = Vec::new();
    let mut trace = vec![op_norm];
    for k in 0..max_outer {
        if op_norm <= tol {
            break;
        }
        let (c, delta) = (schedule.c(k), schedule.delta(k));
        let zk = z.clone();
        let s_map = |w: &[f64]| -> Vec<f64> {
            op(w).iter()
                .zip(w.iter().zip(&zk))
                .map(|(o, (a, b))| o + (a - b) / c)
                .collect()
        };
        // Newton on S_k, stopping as soon as the inexactness rule holds.
        let mut w = zk.clone();
        let mut s = s_map(&w);
        let mut inner = 0;
        let rule = |s: &[f64], w: &[f64]| norm(s) <= delta / c * norm(&sub(w, &zk));
        while inner < PPA_INNER_MAX && !(inner > 0 && rule(&s, &w)) {
            inner += 1;
            let out = damped_newton(&s_map, &w, 0.0, 1);
            if out.iterations == 0 || out.broke_down && out.y == w {
                break;
            }
            w = out.y;
            s = s_map(&w);
        }
        let step_norm = norm(&sub(&w, &zk));
        let rule_met = rule(&s, &w);
        z = w;
        op_norm = norm(&op(&z));
        trace.push(op_norm);
        steps.push(PpaStep {
            k,
            c,
            delta,
            inner_iterations: inner,
            inner_residual: norm(&s),
            step_norm,
            rule_met,
            op_norm,
        });
        if step_norm == 0.0 && op_norm > tol {
            break;
        }
    }
    if op_norm <= tol {
        Ok(PpaReport {
            all_rules_met: steps.iter().all(|s| s.rule_met),
            y: z,
            residual_norm: op_norm,
            outer_iterations: steps.len(),
            steps,
        })
    } else {
        let best = trace.iter().cloned().fold(f64::INFINITY, f64::min);
        Err(WildRespError::NotConverged {
            best_residual: best,
            iterations: steps.len(),
            trace,
        })
    }
}

/// Solves `grad1 l(z, y) = g_target` for `y`, starting numerical solvers at
/// `y0` (the original outcome in the refitting procedure).
pub fn solve_wild_response(
    spec: &LossSpec,
    z: &[f64],
    g_target: &[f64],
    y0: &[f64],
    settings: &SolverSettings,
) -> Result<SolveReport, WildRespError> {
    settings.validate()?;
    spec.check_dims(z, g_target)?;
    spec.check_dims(z, y0)?;
    let residual = |y: &[f64]| -> Vec<f64> { sub(&spec.grad1_raw(z, y), g_target) };
    let checked_residual = |y: &[f64]| -> Result<f64, WildRespError> {
        Ok(norm(&sub(&spec.grad1(z, y)?, g_target)))
    };
    let report = |y: Vec<f64>, iterations, method| -> Result<SolveReport, WildRespError> {
        Ok(SolveReport {
            residual_norm: checked_residual(&y)?,
            y,
            iterations,
            method,
            strictly_monotone: spec.strictly_monotone_in_y(),
        })
    };

    let mut start = y0.to_vec();
    let mut best = f64::INFINITY;
    let mut used = 0;
    if settings.method == MethodChoice::Auto {
        if let Some(y) = spec.inverse_in_y(z, g_target) {
            let r = checked_residual(&y)?;
            if r <= settings.tol {
                return report(y, 0, SolveMethod::ClosedForm);
            }
            best = r;
            start = y;
        }
    }
    if settings.method != MethodChoice::Ppa {
        let out = damped_newton(residual, &start, settings.tol, settings.max_iter);
        used += out.iterations;
        if out.converged {
            return report(out.y, out.iterations, SolveMethod::Newton);
        }
        best = best.min(out.residual_norm);
    }
    let op = |y: &[f64]| -> Vec<f64> { sub(g_target, &spec.grad1_raw(z, y)) };
    match ppa_solve(op, &start, &settings.schedule, settings.tol, settings.max_iter) {
        Ok(ppa) => report(ppa.y, used + ppa.outer_iterations, SolveMethod::Ppa),
        Err(WildRespError::NotConverged {
            best_residual,
            iterations,
            trace,
        }) => Err(WildRespError::NotConverged {
            best_residual: best.min(best_residual),
            iterations: used + iterations,
            trace,
        }),
        Err(e) => Err(e),
    }
}

/// The two perturbed datasets and every per-sample solve report.
#[derive(Debug, Clone)]
pub struct WildDatasets {
    pub diamond: Dataset,
    pub sharp: Dataset,
    pub diamond_reports: Vec<SolveReport>,
    pub sharp_reports: Vec<SolveReport>,
}

impl WildDatasets {
    pub fn max_residual(&self) -> f64 {
        self.diamond_reports
            .iter()
            .chain(&self.sharp_reports)
            .map(|r| r.residual_norm)
            .fold(0.0, f64::max)
    }
}

/// One perturbed dataset: solves `grad1 l(z_i, y) = target_i` for every
/// sample in parallel, starting from the original outcomes.
pub fn build_wild_side(
    ds: &Dataset,
    fitted: &[Vec<f64>],
    targets: &[Vec<f64>],
    spec: &LossSpec,
    side: Side,
    settings: &SolverSettings,
) -> Result<(Dataset, Vec<SolveReport>), WildRespError> {
    if fitted.len() != ds.n() || targets.len() != ds.n() {
        return Err(WildRespError::LengthMismatch {
            what: "fitted values",
            expected: ds.n(),
            got: fitted.len().min(targets.len()),
        });
    }
    let reports = (0..ds.n())
        .into_par_iter()
        .map(|i| {
            solve_wild_response(spec, &fitted[i], &targets[i], &ds.y()[i], settings).map_err(|e| {
                WildRespError::Sample {
                    index: i,
                    side,
                    source: Box::new(e),
                }
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let outcomes = reports.iter().map(|r| r.y.clone()).collect();
    Ok((ds.with_outcomes(outcomes)?, reports))
}

/// Builds the diamond and sharp datasets from fitted values `z_i = f(x_i)`
/// and gradients `g_i = grad1 l(z_i, y_i)`.
#[allow(clippy::too_many_arguments)]
pub fn build_wild_datasets_from_values(
    ds: &Dataset,
    fitted: &[Vec<f64>],
    g_tilde: &[Vec<f64>],
    spec: &LossSpec,
    eps: &[f64],
    rho1: f64,
    rho2: f64,
    settings: &SolverSettings,
) -> Result<WildDatasets, WildRespError> {
    if g_tilde.len() != ds.n() {
        return Err(WildRespError::LengthMismatch {
            what: "gradients",
            expected: ds.n(),
            got: g_tilde.len(),
        });
    }
    let (diamond_t, sharp_t) = wild_target_gradients(g_tilde, eps, rho1, rho2)?;
    let (diamond, diamond_reports) =
        build_wild_side(ds, fitted, &diamond_t, spec, Side::Diamond, settings)?;
    let (sharp, sharp_reports) = build_wild_side(ds, fitted, &sharp_t, spec, Side::Sharp, settings)?;
    Ok(WildDatasets {
        diamond,
        sharp,
        diamond_reports,
        sharp_reports,
    })
}

/// [`build_wild_datasets_from_values`] for a predictor `f_hat`.
pub fn build_wild_datasets(
    ds: &Dataset,
    f_hat: &Predictor,
    spec: &LossSpec,
    eps: &[f64],
    rho1: f64,
    rho2: f64,
    settings: &SolverSettings,
) -> Result<WildDatasets, WildRespError> {
    let fitted = f_hat.predict_all(ds.x())?;
    let g_tilde = fitted
        .iter()
        .zip(ds.y())
        .map(|(z, y)| spec.grad1(z, y))
        .collect::<Result<Vec<_>, _>>()?;
    build_wild_datasets_from_values(ds, &fitted, &g_tilde, spec, eps, rho1, rho2, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{LogPartition, RegularizedExpFamilyLoss};

    fn expfam(lp: LogPartition, mu: f64) -> LossSpec {
        LossSpec::new(RegularizedExpFamilyLoss::new(lp, mu).unwrap())
    }

    #[test]
    fn targets_examples() {
        let g = vec![vec![2.0]];
        let (d, s) = wild_target_gradients(&g, &[1.0], 0.5, 0.5).unwrap();
        assert_eq!(d[0], vec![0.0]);
        assert_eq!(s[0], vec![4.0]);
        let (_, s) = wild_target_gradients(&g, &[-1.0], 0.5, 0.5).unwrap();
        assert_eq!(s[0], vec![0.0]);
        let (d, _) = wild_target_gradients(&g, &[1.0], 1.0, 1.0).unwrap();
        assert_eq!(d[0], vec![-2.0]);
        assert!(wild_target_gradients(&g, &[1.0, 1.0], 1.0, 1.0).is_err());
        assert!(wild_target_gradients(&g, &[1.0], 0.0, 1.0).is_err());
        assert!(wild_target_gradients(&g, &[0.5], 1.0, 1.0).is_err());
    }

    #[test]
    fn wild_target_matches_batch() {
        let t = WildTarget::new(0, vec![0.0], &[2.0], Side::Diamond, 1.0, 1.0);
        assert_eq!(t.g_target, vec![-2.0]);
    }

    #[test]
    fn closed_form_examples() {
        let s = SolverSettings::default();
        let r = solve_wild_response(&LossSpec::squared(), &[1.0, 1.0], &[0.0, 0.0], &[0.0, 0.0], &s)
            .unwrap();
        assert_eq!((r.y.clone(), r.residual_norm, r.method), (vec![1.0, 1.0], 0.0, SolveMethod::ClosedForm));

        let spec = expfam(LogPartition::Gaussian, 1.0);
        let r = solve_wild_response(&spec, &[1.0, 0.0], &[0.0, 0.0], &[0.0, 0.0], &s).unwrap();
        assert_eq!(r.y, vec![2.0, 0.0]);
    }

    #[test]
    fn newton_on_affine_residual() {
        let spec = LossSpec::squared().without_closed_form();
        let s = SolverSettings {
            tol: 1e-10,
            ..SolverSettings::default()
        };
        let r = solve_wild_response(&spec, &[0.3, -1.2], &[1.7, 0.4], &[5.0, 5.0], &s).unwrap();
        assert_eq!(r.method, SolveMethod::Newton);
        assert!(r.residual_norm <= 1e-10 && r.iterations <= 3, "{r:?}");
    }

    #[test]
    fn softplus_needs_numerics_and_agrees_across_starts() {
        let spec = expfam(LogPartition::SoftplusSum, 0.5).without_closed_form();
        let s = SolverSettings {
            tol: 1e-10,
            ..SolverSettings::default()
        };
        let z = [0.4, -0.8];
        let g = [0.3, 0.1];
        let ys: Vec<Vec<f64>> = [[0.0, 0.0], [3.0, -2.0], [-5.0, 4.0]]
            .iter()
            .map(|y0| solve_wild_response(&spec, &z, &g, y0, &s).unwrap().y)
            .collect();
        for y in &ys[1..] {
            assert!(norm(&sub(y, &ys[0])) <= 100.0 * s.tol);
        }
    }

    #[test]
    fn ppa_affine_operator() {
        // op(y) = y - a: one resolvent step maps z0 to (z0 + c a) / (1 + c).
        let a = [2.0, -1.0];
        let op = |y: &[f64]| sub(y, &a);
        let sched = PpaSchedule::default();
        let one = ppa_solve(op, &[0.0, 0.0], &sched, 1e-300, 1);
        let first = match one {
            Err(WildRespError::NotConverged { trace, .. }) => trace[1],
            Ok(r) => r.residual_norm,
            Err(e) => panic!("{e}"),
        };
        assert!((first - norm(&a) / 2.0).abs() < 1e-8);

        let r = ppa_solve(op, &[0.0, 0.0], &sched, 1e-10, 100).unwrap();
        assert!(norm(&sub(&r.y, &a)) <= 1e-10);
        assert!(r.all_rules_met, "{:?}", r.steps);

        // Large steps get there almost at once.
        let fast = PpaSchedule {
            c0: 1e12,
            ..sched
        };
        let r = ppa_solve(op, &[0.0, 0.0], &fast, 1e-10, 100).unwrap();
        assert_eq!(r.outer_iterations, 1);
    }

    #[test]
    fn ppa_matches_closed_form() {
        let spec = LossSpec::squared();
        let z = [0.5, 2.0];
        let g = [-1.0, 3.0];
        let s = SolverSettings {
            tol: 1e-10,
            method: MethodChoice::Ppa,
            ..SolverSettings::default()
        };
        let r = solve_wild_response(&spec, &z, &g, &[0.0, 0.0], &s).unwrap();
        assert_eq!(r.method, SolveMethod::Ppa);
        let exact = spec.inverse_in_y(&z, &g).unwrap();
        assert!(norm(&sub(&r.y, &exact)) <= 1e-8);
    }

    #[test]
    fn squared_loss_dataset_identity() {
        let x: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let ds = Dataset::new(x.clone(), vec![vec![1.0], vec![-2.0], vec![0.5], vec![3.0]]).unwrap();
        let f = Predictor::from_fn(1, |x| vec![0.5 * x[0]]);
        let spec = LossSpec::squared();
        let eps = [1.0, -1.0, -1.0, 1.0];
        let rho1 = 0.7;
        let w = build_wild_datasets(&ds, &f, &spec, &eps, rho1, 0.3, &SolverSettings::default())
            .unwrap();
        for i in 0..4 {
            let fi = 0.5 * i as f64;
            let expect = fi + (2.0 * rho1 * eps[i] - 1.0) * (fi - ds.y()[i][0]);
            assert!((w.diamond.y()[i][0] - expect).abs() < 1e-12);
        }
        assert!(w.diamond.shares_covariates(&ds));

        // rho = 1/2 with all signs +1: diamond outcomes are the fitted values.
        let w = build_wild_datasets(&ds, &f, &spec, &[1.0; 4], 0.5, 0.5, &SolverSettings::default())
            .unwrap();
        for i in 0..4 {
            assert_eq!(w.diamond.y()[i][0], 0.5 * i as f64);
        }

        // Equal rho, flipped signs: the two datasets swap.
        let a = build_wild_datasets(&ds, &f, &spec, &eps, 0.4, 0.4, &SolverSettings::default())
            .unwrap();
        let flipped: Vec<f64> = eps.iter().map(|e| -e).collect();
        let b = build_wild_datasets(&ds, &f, &spec, &flipped, 0.4, 0.4, &SolverSettings::default())
            .unwrap();
        assert_eq!(a.diamond.y(), b.sharp.y());
        assert_eq!(a.sharp.y(), b.diamond.y());
    }
}
