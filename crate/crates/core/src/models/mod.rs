//! Fixed-design datasets, predictors, function classes and the trainers that
//! map one to the other.
//!
//! Trainers are black boxes to the rest of the crate: the refitting engine
//! only ever calls [`Trainer::fit`]. The diagnostics carried by [`Fit`] are
//! reported, never used to steer the procedure.

mod features;
mod predictor;
mod trainers;

use std::sync::Arc;

use thiserror::Error;

use crate::losses::{LossError, LossSpec};
use crate::vecops::{all_finite, norm_sq};

pub use features::{FeatureMap, FunctionClass, LinearFeatureClass};
pub use predictor::Predictor;
pub use trainers::{ConvexErmTrainer, Fit, MlpTrainer, RidgeTrainer, Trainer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("covariates ({x}) and outcomes ({y}) have different lengths")]
    LengthMismatch { x: usize, y: usize },
    #[error("row {index}: {what} has dimension {got}, expected {expected}")]
    Ragged {
        what: &'static str,
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("row {index} contains a non-finite value")]
    NonFinite { index: usize },
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(
        "Gram matrix is numerically singular (eigenvalues {min_eig:.3e}..{max_eig:.3e}); \
         use a positive ridge penalty or fewer features"
    )]
    SingularGram { min_eig: f64, max_eig: f64 },
    #[error("solver stopped after {iterations} iterations with residual {residual:.3e}")]
    NotConverged {
        iterations: usize,
        residual: f64,
        last_params: Vec<f64>,
    },
    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("design points {first} and {second} coincide; the unconstrained class needs distinct covariates")]
    DuplicateDesignPoint { first: usize, second: usize },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// `n` covariate/outcome pairs with covariates in `R^p` and outcomes in `R^d`.
///
/// Covariates sit behind an `Arc` so perturbed copies of a dataset share them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Arc<Vec<Vec<f64>>>,
    y: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let x = Arc::new(x);
        validate_rows(&x, "covariate")?;
        let ds = Dataset { x, y };
        ds.validate_outcomes()?;
        Ok(ds)
    }

    /// Same covariates, new outcomes.
    pub fn with_outcomes(&self, y: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let ds = Dataset {
            x: Arc::clone(&self.x),
            y,
        };
        ds.validate_outcomes()?;
        Ok(ds)
    }

    fn validate_outcomes(&self) -> Result<(), ModelError> {
        if self.y.len() != self.x.len() {
            return Err(ModelError::LengthMismatch {
                x: self.x.len(),
                y: self.y.len(),
            });
        }
        validate_rows(&self.y, "outcome")
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn y(&self) -> &[Vec<f64>] {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x[0].len()
    }

    pub fn d(&self) -> usize {
        self.y[0].len()
    }

    /// True when both datasets hold the very same covariate allocation.
    pub fn shares_covariates(&self, other: &Dataset) -> bool {
        Arc::ptr_eq(&self.x, &other.x)
    }
}

fn validate_rows(rows: &[Vec<f64>], what: &'static str) -> Result<(), ModelError> {
    let first = rows.first().ok_or(ModelError::EmptyDataset)?;
    let width = first.len();
    if width == 0 {
        return Err(ModelError::Ragged {
            what,
            index: 0,
            expected: 1,
            got: 0,
        });
    }
    for (index, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(ModelError::Ragged {
                what,
                index,
                expected: width,
                got: row.len(),
            });
        }
        if !all_finite(row) {
            return Err(ModelError::NonFinite { index });
        }
    }
    Ok(())
}

/// `sqrt((1/n) sum_i ||a_i - b_i||^2)` for two aligned lists of values.
pub fn empirical_norm_values(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64, ModelError> {
    if a.len() != b.len() {
        return Err(ModelError::DimensionMismatch {
            what: "value lists",
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut total = 0.0;
    for (u, v) in a.iter().zip(b) {
        if u.len() != v.len() {
            return Err(ModelError::DimensionMismatch {
                what: "predictor output",
                expected: u.len(),
                got: v.len(),
            });
        }
        total += u.iter().zip(v).map(|(s, t)| (s - t) * (s - t)).sum::<f64>();
    }
    Ok((total / a.len() as f64).sqrt())
}

/// Empirical distance `||f - g||_n` over the design points of `ds`.
pub fn empirical_norm(f: &Predictor, g: &Predictor, ds: &Dataset) -> Result<f64, ModelError> {
    empirical_norm_values(&f.predict_all(ds.x())?, &g.predict_all(ds.x())?)
}

/// Mean loss of precomputed predictions against the outcomes of `ds`.
pub fn empirical_risk_values(
    spec: &LossSpec,
    values: &[Vec<f64>],
    ds: &Dataset,
) -> Result<f64, ModelError> {
    if values.len() != ds.n() {
        return Err(ModelError::DimensionMismatch {
            what: "prediction count",
            expected: ds.n(),
            got: values.len(),
        });
    }
    let mut total = 0.0;
    for (z, y) in values.iter().zip(ds.y()) {
        total += spec.value(z, y)?;
    }
    Ok(total / ds.n() as f64)
}

/// `(1/n) sum_i l(f(x_i), y_i)`.
pub fn empirical_risk(spec: &LossSpec, f: &Predictor, ds: &Dataset) -> Result<f64, ModelError> {
    empirical_risk_values(spec, &f.predict_all(ds.x())?, ds)
}

/// `(1/n) sum_i <g_i, f(x_i) - h(x_i)>` for aligned value lists.
pub fn mean_inner_values(g: &[Vec<f64>], f: &[Vec<f64>], h: &[Vec<f64>]) -> f64 {
    let n = g.len().max(1) as f64;
    g.iter()
        .zip(f.iter().zip(h))
        .map(|(gi, (fi, hi))| {
            gi.iter()
                .zip(fi.iter().zip(hi))
                .map(|(a, (b, c))| a * (b - c))
                .sum::<f64>()
        })
        .sum::<f64>()
        / n
}

/// Root-mean-square norm of a list of vectors, `||v||_n`.
pub fn rms(v: &[Vec<f64>]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|r| norm_sq(r)).sum::<f64>() / v.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(values: Vec<Vec<f64>>, x: &[Vec<f64>]) -> Predictor {
        Predictor::table(x.to_vec(), values).unwrap()
    }

    #[test]
    fn rejects_bad_datasets() {
        assert_eq!(Dataset::new(vec![], vec![]), Err(ModelError::EmptyDataset));
        assert!(matches!(
            Dataset::new(vec![vec![0.0], vec![1.0, 2.0]], vec![vec![0.0], vec![0.0]]),
            Err(ModelError::Ragged { index: 1, .. })
        ));
        assert!(matches!(
            Dataset::new(vec![vec![0.0]], vec![vec![f64::NAN]]),
            Err(ModelError::NonFinite { index: 0 })
        ));
        assert!(matches!(
            Dataset::new(vec![vec![0.0]], vec![vec![0.0], vec![1.0]]),
            Err(ModelError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn empirical_norm_examples() {
        let x = vec![vec![0.0], vec![1.0]];
        let ds = Dataset::new(x.clone(), vec![vec![0.0], vec![0.0]]).unwrap();
        let f = constant(vec![vec![1.0], vec![-1.0]], &x);
        let zero = constant(vec![vec![0.0], vec![0.0]], &x);
        assert_eq!(empirical_norm(&f, &f, &ds).unwrap(), 0.0);
        assert_eq!(empirical_norm(&f, &zero, &ds).unwrap(), 1.0);

        // squared norms 1, 4, 9, 2 -> sqrt(16 / 4) = 2
        let a = vec![
            vec![1.0, 0.0],
            vec![0.0, 2.0],
            vec![3.0, 0.0],
            vec![1.0, 1.0],
        ];
        let b = vec![vec![0.0, 0.0]; 4];
        assert_eq!(empirical_norm_values(&a, &b).unwrap(), 2.0);
    }

    #[test]
    fn empirical_risk_examples() {
        let spec = LossSpec::squared();
        let ds = Dataset::new(vec![vec![0.0]], vec![vec![2.0]]).unwrap();
        let zero = constant(vec![vec![0.0]], ds.x());
        assert_eq!(empirical_risk(&spec, &zero, &ds).unwrap(), 4.0);
        let fitted = constant(ds.y().to_vec(), ds.x());
        assert_eq!(empirical_risk(&spec, &fitted, &ds).unwrap(), 0.0);

        // losses 1, 0, 2 -> mean 1
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let ds = Dataset::new(x.clone(), vec![vec![0.0]; 3]).unwrap();
        let f = constant(vec![vec![1.0], vec![0.0], vec![2.0_f64.sqrt()]], &x);
        assert!((empirical_risk(&spec, &f, &ds).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn with_outcomes_shares_covariates() {
        let ds = Dataset::new(vec![vec![0.0], vec![1.0]], vec![vec![0.0], vec![1.0]]).unwrap();
        let other = ds.with_outcomes(vec![vec![5.0], vec![6.0]]).unwrap();
        assert!(ds.shares_covariates(&other));
        assert!(ds.with_outcomes(vec![vec![5.0]]).is_err());
    }
}
