//! Doubly wild refitting end to end.
//!
//! 1. Fit `f_hat` on the original data and record `g_i = grad1 l(f_hat(x_i), y_i)`.
//! 2. Draw one Rademacher sequence `eps` shared by both perturbations.
//! 3. Solve for diamond responses with gradient `(1 - 2 rho1 eps_i) g_i` and
//!    sharp responses with gradient `(1 + 2 rho2 eps_i) g_i`.
//! 4. Refit the same trainer on both perturbed datasets.
//!
//! The trainer is only ever touched through [`Trainer::fit`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::losses::{LossError, LossSpec};
use crate::models::{empirical_norm_values, Dataset, Fit, ModelError, Predictor, Trainer};
use crate::wildresp::{
    build_wild_side, wild_target_gradients, Side, SolveReport, SolverSettings, WildRespError,
};

/// Pipeline stage at which a failure happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    BaseFit,
    Gradients,
    WildResponses,
    RefitDiamond,
    RefitSharp,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::BaseFit => "base fit",
            Stage::Gradients => "gradient evaluation",
            Stage::WildResponses => "wild responses",
            Stage::RefitDiamond => "diamond refit",
            Stage::RefitSharp => "sharp refit",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("{stage}: {source}")]
    Trainer { stage: Stage, source: ModelError },
    #[error("{stage}: {source}")]
    Loss { stage: Stage, source: LossError },
    #[error("wild responses: {0}")]
    WildResponse(#[from] WildRespError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// `n` independent uniform signs, deterministic in `seed`.
pub fn rademacher(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect()
}

/// The base predictor with its values and loss gradients on the design.
#[derive(Debug, Clone)]
pub struct BaseFit {
    pub dataset: Dataset,
    pub predictor: Predictor,
    pub fitted: Vec<Vec<f64>>,
    pub g_tilde: Vec<Vec<f64>>,
    pub stationarity: f64,
}

impl BaseFit {
    /// Trains `f_hat` with `trainer`.
    pub fn train<T: Trainer + ?Sized>(
        trainer: &T,
        ds: &Dataset,
        spec: &LossSpec,
    ) -> Result<Self, EngineError> {
        let fit = trainer.fit(ds).map_err(|source| EngineError::Trainer {
            stage: Stage::BaseFit,
            source,
        })?;
        Self::from_predictor(fit.predictor, ds, spec, fit.stationarity)
    }

    /// Uses an externally supplied predictor as `f_hat`.
    pub fn from_predictor(
        predictor: Predictor,
        ds: &Dataset,
        spec: &LossSpec,
        stationarity: f64,
    ) -> Result<Self, EngineError> {
        let fitted = predictor
            .predict_all(ds.x())
            .map_err(|source| EngineError::Trainer {
                stage: Stage::Gradients,
                source,
            })?;
        let g_tilde = fitted
            .iter()
            .zip(ds.y())
            .map(|(z, y)| spec.grad1(z, y))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|source| EngineError::Loss {
                stage: Stage::Gradients,
                source,
            })?;
        Ok(BaseFit {
            dataset: ds.clone(),
            predictor,
            fitted,
            g_tilde,
            stationarity,
        })
    }

    pub fn n(&self) -> usize {
        self.dataset.n()
    }
}

/// One perturbed dataset and the predictor refit on it.
#[derive(Debug, Clone)]
pub struct SideRefit {
    pub side: Side,
    pub rho: f64,
    pub dataset: Dataset,
    pub reports: Vec<SolveReport>,
    pub predictor: Predictor,
    pub values: Vec<Vec<f64>>,
    /// `||f_side - f_hat||_n`.
    pub radius: f64,
    pub stationarity: f64,
}

/// Builds one perturbed dataset and refits on it.
pub fn refit_side<T: Trainer + ?Sized>(
    base: &BaseFit,
    trainer: &T,
    spec: &LossSpec,
    eps: &[f64],
    side: Side,
    rho: f64,
    settings: &SolverSettings,
) -> Result<SideRefit, EngineError> {
    let (diamond_t, sharp_t) = wild_target_gradients(&base.g_tilde, eps, rho, rho)?;
    let targets = match side {
        Side::Diamond => diamond_t,
        Side::Sharp => sharp_t,
    };
    let (dataset, reports) =
        build_wild_side(&base.dataset, &base.fitted, &targets, spec, side, settings)?;
    let stage = match side {
        Side::Diamond => Stage::RefitDiamond,
        Side::Sharp => Stage::RefitSharp,
    };
    let wrap = |source| EngineError::Trainer { stage, source };
    let Fit {
        predictor,
        stationarity,
        ..
    } = trainer.fit(&dataset).map_err(wrap)?;
    let values = predictor.predict_all(base.dataset.x()).map_err(wrap)?;
    let radius = empirical_norm_values(&values, &base.fitted).map_err(wrap)?;
    Ok(SideRefit {
        side,
        rho,
        dataset,
        reports,
        predictor,
        values,
        radius,
        stationarity,
    })
}

/// Everything the refitting procedure produces.
#[derive(Debug, Clone)]
pub struct WildRefitOutput {
    pub base: BaseFit,
    pub eps: Vec<f64>,
    pub diamond: SideRefit,
    pub sharp: SideRefit,
    /// Seed of the Rademacher draw, when it came from one.
    pub seed: Option<u64>,
}

impl WildRefitOutput {
    pub fn f_hat(&self) -> &Predictor {
        &self.base.predictor
    }
    pub fn f_diamond(&self) -> &Predictor {
        &self.diamond.predictor
    }
    pub fn f_sharp(&self) -> &Predictor {
        &self.sharp.predictor
    }
    pub fn d0(&self) -> &Dataset {
        &self.base.dataset
    }
    pub fn d_diamond(&self) -> &Dataset {
        &self.diamond.dataset
    }
    pub fn d_sharp(&self) -> &Dataset {
        &self.sharp.dataset
    }
    pub fn g_tilde(&self) -> &[Vec<f64>] {
        &self.base.g_tilde
    }
    pub fn rho1(&self) -> f64 {
        self.diamond.rho
    }
    pub fn rho2(&self) -> f64 {
        self.sharp.rho
    }
    pub fn r_diamond(&self) -> f64 {
        self.diamond.radius
    }
    pub fn r_sharp(&self) -> f64 {
        self.sharp.radius
    }
    /// Stationarity residuals of the base, diamond and sharp fits.
    pub fn trainer_stationarity(&self) -> [f64; 3] {
        [
            self.base.stationarity,
            self.diamond.stationarity,
            self.sharp.stationarity,
        ]
    }
    pub fn max_solve_residual(&self) -> f64 {
        self.diamond
            .reports
            .iter()
            .chain(&self.sharp.reports)
            .map(|r| r.residual_norm)
            .fold(0.0, f64::max)
    }
}

/// Perturbs and refits both sides for a given base fit and sign sequence.
/// The two refits run concurrently.
pub fn refit_both<T: Trainer + ?Sized>(
    base: BaseFit,
    trainer: &T,
    spec: &LossSpec,
    eps: Vec<f64>,
    rho1: f64,
    rho2: f64,
    settings: &SolverSettings,
) -> Result<WildRefitOutput, EngineError> {
    if eps.len() != base.n() {
        return Err(EngineError::InvalidInput(format!(
            "{} signs for {} samples",
            eps.len(),
            base.n()
        )));
    }
    let (diamond, sharp) = rayon::join(
        || refit_side(&base, trainer, spec, &eps, Side::Diamond, rho1, settings),
        || refit_side(&base, trainer, spec, &eps, Side::Sharp, rho2, settings),
    );
    Ok(WildRefitOutput {
        diamond: diamond?,
        sharp: sharp?,
        base,
        eps,
        seed: None,
    })
}

/// Runs the full procedure with signs drawn from `seed`.
pub fn doubly_wild_refit<T: Trainer + ?Sized>(
    trainer: &T,
    ds: &Dataset,
    spec: &LossSpec,
    rho1: f64,
    rho2: f64,
    seed: u64,
    settings: &SolverSettings,
) -> Result<WildRefitOutput, EngineError> {
    let base = BaseFit::train(trainer, ds, spec)?;
    let eps = rademacher(ds.n(), seed);
    let mut out = refit_both(base, trainer, spec, eps, rho1, rho2, settings)?;
    out.seed = Some(seed);
    Ok(out)
}

/// Same as [`doubly_wild_refit`] with caller-chosen signs.
pub fn doubly_wild_refit_with_signs<T: Trainer + ?Sized>(
    trainer: &T,
    ds: &Dataset,
    spec: &LossSpec,
    eps: Vec<f64>,
    rho1: f64,
    rho2: f64,
    settings: &SolverSettings,
) -> Result<WildRefitOutput, EngineError> {
    let base = BaseFit::train(trainer, ds, spec)?;
    refit_both(base, trainer, spec, eps, rho1, rho2, settings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rademacher_properties() {
        assert_eq!(rademacher(4, 11), rademacher(4, 11));
        let one = rademacher(1, 3);
        assert!(one.len() == 1 && one[0].abs() == 1.0);
        let n = 100_000;
        let mean = rademacher(n, 5).iter().sum::<f64>() / n as f64;
        assert!(mean.abs() <= 3.0 / (n as f64).sqrt());
    }
}
