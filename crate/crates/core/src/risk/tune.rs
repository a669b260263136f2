//! Choosing a noise scale `rho` whose refit lands at a target radius.
//!
//! Nothing guarantees that `rho -> ||f_rho - f_hat||_n` is monotone, so the
//! search scans a geometric grid for a sign change of
//! `phi(rho) = radius(rho) - target` and bisects inside the first one. With no
//! sign change, the minimum of `|phi|` near the best grid point is refined by
//! golden-section search, which covers targets at the bottom of a valley
//! (such as a zero target).

use serde::{Deserialize, Serialize};

use super::RiskError;
use crate::engine::{refit_side, BaseFit, SideRefit};
use crate::losses::LossSpec;
use crate::models::Trainer;
use crate::wildresp::{Side, SolverSettings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneSettings {
    pub bracket: (f64, f64),
    /// Absolute tolerance on the achieved radius.
    pub tol: f64,
    pub max_evals: usize,
    pub grid_points: usize,
}

impl Default for TuneSettings {
    fn default() -> Self {
        TuneSettings {
            bracket: (1e-3, 1e3),
            tol: 1e-8,
            max_evals: 120,
            grid_points: 25,
        }
    }
}

/// One evaluated noise scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub rho: f64,
    pub radius: f64,
    pub phase: ScanPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanPhase {
    Grid,
    Bisection,
    Golden,
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    pub side: Side,
    pub rho: f64,
    pub target: f64,
    pub achieved: f64,
    /// `|achieved - target| > tol`: the closest radius found is returned.
    pub gap: bool,
    pub table: Vec<ScanRow>,
    pub refit: SideRefit,
}

/// Finds `rho` with `||f_rho - f_hat||_n` within `tol` of `target`, using the
/// fixed signs `eps` for every evaluation.
#[allow(clippy::too_many_arguments)]
pub fn tune_rho_for_radius<T: Trainer + ?Sized>(
    base: &BaseFit,
    trainer: &T,
    spec: &LossSpec,
    eps: &[f64],
    target: f64,
    side: Side,
    settings: &TuneSettings,
    solver: &SolverSettings,
) -> Result<TuneResult, RiskError> {
    let (lo, hi) = settings.bracket;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(RiskError::InvalidInput(format!(
            "bracket must satisfy 0 < lo < hi, got ({lo}, {hi})"
        )));
    }
    if !(target >= 0.0 && target.is_finite()) {
        return Err(RiskError::InvalidInput(format!("target radius {target} is invalid")));
    }
    let grid_points = settings.grid_points.max(2);
    let mut search = Search {
        base,
        trainer,
        spec,
        eps,
        side,
        solver,
        target,
        table: Vec::new(),
        best: None,
    };

    let ratio = (hi / lo).powf(1.0 / (grid_points - 1) as f64);
    let grid: Vec<f64> = (0..grid_points)
        .map(|k| if k + 1 == grid_points { hi } else { lo * ratio.powi(k as i32) })
        .collect();
    let mut phis = Vec::with_capacity(grid.len());
    let mut bracket = None;
    for (k, &rho) in grid.iter().enumerate() {
        let phi = search.eval(rho, ScanPhase::Grid)?;
        phis.push(phi);
        if phi.abs() <= settings.tol {
            break;
        }
        if k > 0 && phis[k - 1].signum() != phi.signum() {
            bracket = Some((grid[k - 1], phis[k - 1], rho));
            break;
        }
    }

    if search.best_gap() > settings.tol {
        if let Some((mut a, phi_a, mut b)) = bracket {
            while search.table.len() < settings.max_evals {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                let phi = search.eval(mid, ScanPhase::Bisection)?;
                if phi.abs() <= settings.tol {
                    break;
                }
                if phi.signum() == phi_a.signum() {
                    a = mid;
                } else {
                    b = mid;
                }
            }
        } else {
            // Golden section on |phi| around the best grid point.
            let k = phis
                .iter()
                .enumerate()
                .min_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
                .map(|(k, _)| k)
                .unwrap_or(0);
            let mut a = grid[k.saturating_sub(1)];
            let mut b = grid[(k + 1).min(grid.len() - 1)];
            let g = (5f64.sqrt() - 1.0) / 2.0;
            let mut c = b - g * (b - a);
            let mut d = a + g * (b - a);
            let mut fc = search.eval(c, ScanPhase::Golden)?.abs();
            let mut fd = search.eval(d, ScanPhase::Golden)?.abs();
            while search.table.len() < settings.max_evals
                && fc.min(fd) > settings.tol
                && b - a > 1e-15 * b
            {
                if fc < fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - g * (b - a);
                    fc = search.eval(c, ScanPhase::Golden)?.abs();
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + g * (b - a);
                    fd = search.eval(d, ScanPhase::Golden)?.abs();
                }
            }
            if search.best_gap() > settings.tol {
                return Err(RiskError::NoBracket {
                    table: search.table,
                });
            }
        }
    }

    let gap = search.best_gap() > settings.tol;
    let refit = search.best.expect("at least one evaluation");
    Ok(TuneResult {
        side,
        rho: refit.rho,
        target,
        achieved: refit.radius,
        gap,
        table: search.table,
        refit,
    })
}

struct Search<'a, T: Trainer + ?Sized> {
    base: &'a BaseFit,
    trainer: &'a T,
    spec: &'a LossSpec,
    eps: &'a [f64],
    side: Side,
    solver: &'a SolverSettings,
    target: f64,
    table: Vec<ScanRow>,
    best: Option<SideRefit>,
}

impl<T: Trainer + ?Sized> Search<'_, T> {
    fn eval(&mut self, rho: f64, phase: ScanPhase) -> Result<f64, RiskError> {
        let refit = refit_side(
            self.base,
            self.trainer,
            self.spec,
            self.eps,
            self.side,
            rho,
            self.solver,
        )?;
        let phi = refit.radius - self.target;
        self.table.push(ScanRow {
            rho,
            radius: refit.radius,
            phase,
        });
        if phi.abs() < self.best_gap() {
            self.best = Some(refit);
        }
        Ok(phi)
    }

    fn best_gap(&self) -> f64 {
        self.best
            .as_ref()
            .map_or(f64::INFINITY, |b| (b.radius - self.target).abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Dataset, FunctionClass, Predictor, RidgeTrainer};

    /// f_hat = 0 on y = (1, -1): g = (-2, 2), ||g||_n = 2. The unconstrained
    /// refit gives radius(rho) = |1 - 2 rho| ||g||_n / 2 when all eps = +1.
    fn setup() -> (BaseFit, RidgeTrainer, LossSpec) {
        let ds = Dataset::new(vec![vec![0.0], vec![1.0]], vec![vec![1.0], vec![-1.0]]).unwrap();
        let spec = LossSpec::squared();
        let zero = Predictor::from_fn(1, |_| vec![0.0]);
        let base = BaseFit::from_predictor(zero, &ds, &spec, 0.0).unwrap();
        let trainer = RidgeTrainer::new(0.0, FunctionClass::Unconstrained).unwrap();
        (base, trainer, spec)
    }

    #[test]
    fn hits_rho_one_for_unit_target() {
        let (base, trainer, spec) = setup();
        let settings = TuneSettings {
            bracket: (0.01, 100.0),
            ..TuneSettings::default()
        };
        let res = tune_rho_for_radius(
            &base,
            &trainer,
            &spec,
            &[1.0, 1.0],
            1.0,
            Side::Diamond,
            &settings,
            &SolverSettings::default(),
        )
        .unwrap();
        assert!(!res.gap);
        assert!((res.rho - 1.0).abs() < 1e-7, "{}", res.rho);
    }

    #[test]
    fn zero_target_finds_half() {
        let (base, trainer, spec) = setup();
        let settings = TuneSettings {
            bracket: (0.01, 100.0),
            ..TuneSettings::default()
        };
        let res = tune_rho_for_radius(
            &base,
            &trainer,
            &spec,
            &[1.0, 1.0],
            0.0,
            Side::Diamond,
            &settings,
            &SolverSettings::default(),
        )
        .unwrap();
        assert!((res.rho - 0.5).abs() < 1e-8, "{}", res.rho);
    }

    #[test]
    fn unreachable_target_reports_table() {
        let (base, trainer, spec) = setup();
        let settings = TuneSettings {
            bracket: (0.6, 0.7),
            max_evals: 30,
            ..TuneSettings::default()
        };
        let err = tune_rho_for_radius(
            &base,
            &trainer,
            &spec,
            &[1.0, 1.0],
            5.0,
            Side::Diamond,
            &settings,
            &SolverSettings::default(),
        )
        .unwrap_err();
        assert!(matches!(err, RiskError::NoBracket { ref table } if !table.is_empty()));
    }
}
