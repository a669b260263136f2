//! Scenario configuration: how the design, the true regression function, the
//! loss, the trainer and the function class are specified and built.
//!
//! Every section deserializes from a table with defaults on every field and
//! unknown keys rejected, so the same types back the command-line config
//! files.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{NoiseModel, OracleError};
use crate::losses::{LogPartition, LossSpec, QuadraticFormLoss, RegularizedExpFamilyLoss};
use crate::models::{
    ConvexErmTrainer, FeatureMap, FunctionClass, LinearFeatureClass, MlpTrainer, Predictor,
    RidgeTrainer, Trainer,
};
use crate::wildresp::{MethodChoice, PpaSchedule, SolverSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DimsConfig {
    pub n: usize,
    pub p: usize,
    pub d: usize,
}

impl Default for DimsConfig {
    fn default() -> Self {
        DimsConfig { n: 100, p: 2, d: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignRule {
    /// Independent uniform draws from `[low, high]^p`.
    #[default]
    UniformCube,
    /// A regular product grid over `[low, high]^p`, first `n` points in
    /// lexicographic order.
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignConfig {
    pub rule: DesignRule,
    pub low: f64,
    pub high: f64,
    pub seed: u64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            rule: DesignRule::UniformCube,
            low: -1.0,
            high: 1.0,
            seed: 7,
        }
    }
}

impl DesignConfig {
    /// The frozen covariates.
    pub fn covariates(&self, n: usize, p: usize) -> Result<Vec<Vec<f64>>, OracleError> {
        if n == 0 || p == 0 {
            return Err(OracleError::Config("design needs n >= 1 and p >= 1".into()));
        }
        if !(self.low < self.high) || !self.low.is_finite() || !self.high.is_finite() {
            return Err(OracleError::Config(format!(
                "design range [{}, {}] is empty",
                self.low, self.high
            )));
        }
        let width = self.high - self.low;
        Ok(match self.rule {
            DesignRule::UniformCube => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                (0..n)
                    .map(|_| (0..p).map(|_| self.low + width * rng.random::<f64>()).collect())
                    .collect()
            }
            DesignRule::Grid => {
                let mut k = 1usize;
                while k.pow(p as u32) < n {
                    k += 1;
                }
                let step = if k > 1 { width / (k - 1) as f64 } else { 0.0 };
                (0..n)
                    .map(|mut idx| {
                        let mut x = vec![0.0; p];
                        for coord in x.iter_mut().rev() {
                            *coord = self.low + step * (idx % k) as f64;
                            idx /= k;
                        }
                        x
                    })
                    .collect()
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FStarKind {
    /// `x -> Theta phi(x)` for a named feature map.
    #[default]
    Linear,
    /// `f_a(x) = scale * (sin(pi x_j) + x_k^2 / 2)` with `j = a mod p`,
    /// `k = (a + 1) mod p`; outside every linear class built in.
    Sine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FStarConfig {
    pub kind: FStarKind,
    pub features: String,
    /// `d x m` coefficients; drawn as `scale * N(0, 1)` from `seed` when absent.
    pub coefficients: Option<Vec<Vec<f64>>>,
    pub scale: f64,
    pub seed: u64,
}

impl Default for FStarConfig {
    fn default() -> Self {
        FStarConfig {
            kind: FStarKind::Linear,
            features: "affine".into(),
            coefficients: None,
            scale: 1.0,
            seed: 11,
        }
    }
}

impl FStarConfig {
    /// The true regression function and, when linear, its coefficients.
    pub fn build(&self, p: usize, d: usize) -> Result<(Predictor, Option<DMatrix<f64>>), OracleError> {
        match self.kind {
            FStarKind::Linear => {
                let features = FeatureMap::from_name(&self.features)?;
                let m = features.dim(p);
                let theta = match &self.coefficients {
                    Some(rows) => {
                        if rows.len() != d || rows.iter().any(|r| r.len() != m) {
                            return Err(OracleError::Config(format!(
                                "f_star coefficients must be {d} x {m} for `{}` features",
                                self.features
                            )));
                        }
                        DMatrix::from_fn(d, m, |a, j| rows[a][j])
                    }
                    None => {
                        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                        let draws: Vec<f64> = (0..d * m)
                            .map(|_| self.scale * rng.sample::<f64, _>(StandardNormal))
                            .collect();
                        DMatrix::from_row_slice(d, m, &draws)
                    }
                };
                Ok((Predictor::linear(features, theta.clone()), Some(theta)))
            }
            FStarKind::Sine => {
                let scale = self.scale;
                let f = Predictor::from_fn(d, move |x: &[f64]| {
                    let p = x.len();
                    (0..d)
                        .map(|a| {
                            let j = a % p;
                            let k = (a + 1) % p;
                            scale * ((std::f64::consts::PI * x[j]).sin() + 0.5 * x[k] * x[k])
                        })
                        .collect()
                })
                .with_class_tag("sine");
                Ok((f, None))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossName {
    #[default]
    Squared,
    Expfam,
    Quadform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub name: LossName,
    /// Log-partition for `expfam`: `gaussian` or `softplus-sum`.
    pub log_partition: String,
    /// Ridge weight of `expfam`.
    pub mu: f64,
    /// Matrix of `quadform`; identity when absent.
    pub a: Option<Vec<Vec<f64>>>,
    /// Linear shift of `quadform`; zero when absent.
    pub b: Option<Vec<f64>>,
    /// Disable the closed-form inverse so numerical solvers are exercised.
    pub closed_form: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            name: LossName::Squared,
            log_partition: "gaussian".into(),
            mu: 1.0,
            a: None,
            b: None,
            closed_form: true,
        }
    }
}

impl LossConfig {
    pub fn build(&self, d: usize) -> Result<LossSpec, OracleError> {
        let spec = match self.name {
            LossName::Squared => LossSpec::squared(),
            LossName::Expfam => LossSpec::new(RegularizedExpFamilyLoss::new(
                LogPartition::from_name(&self.log_partition)?,
                self.mu,
            )?),
            LossName::Quadform => {
                let a = match &self.a {
                    Some(rows) => {
                        if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                            return Err(OracleError::Config(format!("quadform A must be {d} x {d}")));
                        }
                        DMatrix::from_fn(d, d, |i, j| rows[i][j])
                    }
                    None => DMatrix::identity(d, d),
                };
                let b = match &self.b {
                    Some(v) => DVector::from_column_slice(v),
                    None => DVector::zeros(d),
                };
                LossSpec::new(QuadraticFormLoss::new(a, b)?)
            }
        };
        Ok(if self.closed_form {
            spec
        } else {
            spec.without_closed_form()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassKind {
    #[default]
    Linear,
    Unconstrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassConfig {
    pub kind: ClassKind,
    pub features: String,
    /// Frobenius-norm bound on the coefficients.
    pub bound: Option<f64>,
}

impl Default for ClassConfig {
    fn default() -> Self {
        ClassConfig {
            kind: ClassKind::Linear,
            features: "affine".into(),
            bound: None,
        }
    }
}

impl ClassConfig {
    pub fn build(&self, d: usize) -> Result<FunctionClass, OracleError> {
        Ok(match self.kind {
            ClassKind::Unconstrained => FunctionClass::Unconstrained,
            ClassKind::Linear => {
                let class = LinearFeatureClass::new(FeatureMap::from_name(&self.features)?, d);
                match self.bound {
                    Some(b) if b > 0.0 && b.is_finite() => FunctionClass::Linear(class.with_bound(b)),
                    Some(b) => {
                        return Err(OracleError::Config(format!(
                            "class bound must be positive, got {b}"
                        )))
                    }
                    None => FunctionClass::Linear(class),
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainerName {
    #[default]
    Ridge,
    ConvexErm,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub name: TrainerName,
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Hidden widths of the network trainer.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub step: f64,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            name: TrainerName::Ridge,
            lambda: 0.0,
            tol: 1e-9,
            max_iter: 20_000,
            hidden: vec![8],
            epochs: 500,
            step: 0.05,
            seed: 3,
        }
    }
}

impl TrainerConfig {
    pub fn build(
        &self,
        spec: &LossSpec,
        class: &FunctionClass,
        p: usize,
        d: usize,
    ) -> Result<Arc<dyn Trainer>, OracleError> {
        Ok(match self.name {
            TrainerName::Ridge => {
                if spec.name() != "squared" {
                    return Err(OracleError::Config(format!(
                        "the ridge trainer minimizes squared loss; use convex-erm for `{}`",
                        spec.name()
                    )));
                }
                Arc::new(RidgeTrainer::new(self.lambda, class.clone())?)
            }
            TrainerName::ConvexErm => Arc::new(ConvexErmTrainer::new(
                spec.clone(),
                class.clone(),
                self.tol,
                self.max_iter,
            )?),
            TrainerName::Mlp => {
                let mut widths = vec![p];
                widths.extend(&self.hidden);
                widths.push(d);
                Arc::new(MlpTrainer::new(
                    widths,
                    self.seed,
                    self.epochs,
                    self.step,
                    spec.clone(),
                )?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub method: MethodChoice,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverSettings::default();
        SolverConfig {
            tol: s.tol,
            max_iter: s.max_iter,
            method: s.method,
        }
    }
}

impl SolverConfig {
    pub fn settings(&self) -> SolverSettings {
        SolverSettings {
            tol: self.tol,
            max_iter: self.max_iter,
            method: self.method,
            schedule: PpaSchedule::default(),
        }
    }
}

/// A complete synthetic problem description.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub dims: DimsConfig,
    pub design: DesignConfig,
    pub f_star: FStarConfig,
    pub noise: NoiseModel,
    pub loss: LossConfig,
    pub trainer: TrainerConfig,
    pub class: ClassConfig,
    pub solver: SolverConfig,
}

impl ScenarioConfig {
    /// Whether `f*` lies in the configured class: always for the
    /// unconstrained class; for a linear class when `f*` is linear in the same
    /// features and within the coefficient bound.
    pub fn is_well_specified(&self, f_star_theta: Option<&DMatrix<f64>>) -> bool {
        match self.class.kind {
            ClassKind::Unconstrained => true,
            ClassKind::Linear => match f_star_theta {
                Some(theta) if self.f_star.features == self.class.features => {
                    self.class.bound.is_none_or(|b| theta.norm() <= b)
                }
                _ => false,
            },
        }
    }
}
