use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::{Dataset, ModelError, Predictor};

type FeatureFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Deterministic feature map `phi: R^p -> R^m`.
#[derive(Clone)]
pub enum FeatureMap {
    /// `phi(x) = 1`.
    Intercept,
    /// `phi(x) = x`.
    Identity,
    /// `phi(x) = (1, x)`.
    Affine,
    /// `phi(x) = (1, x, x_j x_k for j <= k)`.
    Quadratic,
    /// One-hot indicator of the nearest anchor point. With the design points
    /// as anchors the linear class becomes the unconstrained class.
    Indicator(Arc<Vec<Vec<f64>>>),
    Custom {
        name: String,
        dim: usize,
        map: FeatureFn,
    },
}

impl fmt::Debug for FeatureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureMap::Indicator(points) => write!(f, "Indicator({} anchors)", points.len()),
            FeatureMap::Custom { name, dim, .. } => write!(f, "Custom({name}, dim {dim})"),
            other => f.write_str(other.name()),
        }
    }
}

impl FeatureMap {
    pub fn from_name(name: &str) -> Result<Self, ModelError> {
        match name {
            "intercept" => Ok(FeatureMap::Intercept),
            "identity" => Ok(FeatureMap::Identity),
            "affine" => Ok(FeatureMap::Affine),
            "quadratic" => Ok(FeatureMap::Quadratic),
            other => Err(ModelError::InvalidConfig(format!(
                "unknown feature map `{other}` (expected intercept, identity, affine or quadratic)"
            ))),
        }
    }

    pub fn custom(
        name: impl Into<String>,
        dim: usize,
        map: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        FeatureMap::Custom {
            name: name.into(),
            dim,
            map: Arc::new(map),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            FeatureMap::Intercept => "intercept",
            FeatureMap::Identity => "identity",
            FeatureMap::Affine => "affine",
            FeatureMap::Quadratic => "quadratic",
            FeatureMap::Indicator(_) => "indicator",
            FeatureMap::Custom { name, .. } => name,
        }
    }

    /// Number of features produced for covariates in `R^p`.
    pub fn dim(&self, p: usize) -> usize {
        match self {
            FeatureMap::Intercept => 1,
            FeatureMap::Identity => p,
            FeatureMap::Affine => p + 1,
            FeatureMap::Quadratic => 1 + p + p * (p + 1) / 2,
            FeatureMap::Indicator(points) => points.len(),
            FeatureMap::Custom { dim, .. } => *dim,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            FeatureMap::Intercept => vec![1.0],
            FeatureMap::Identity => x.to_vec(),
            FeatureMap::Affine => std::iter::once(1.0).chain(x.iter().copied()).collect(),
            FeatureMap::Quadratic => {
                let mut out = Vec::with_capacity(self.dim(x.len()));
                out.push(1.0);
                out.extend_from_slice(x);
                for j in 0..x.len() {
                    for k in j..x.len() {
                        out.push(x[j] * x[k]);
                    }
                }
                out
            }
            FeatureMap::Indicator(points) => {
                let mut out = vec![0.0; points.len()];
                out[nearest(points, x)] = 1.0;
                out
            }
            FeatureMap::Custom { map, .. } => map(x),
        }
    }
}

/// Index of the anchor closest to `x` (first on ties; exact matches win).
pub(crate) fn nearest(points: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        let d: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = i;
            if d == 0.0 {
                break;
            }
        }
    }
    best
}

/// Predictors `x -> Theta phi(x)` with `Theta` a `d x m` matrix, optionally
/// restricted to a Frobenius ball `||Theta||_F <= coefficient_bound`.
#[derive(Debug, Clone)]
pub struct LinearFeatureClass {
    pub features: FeatureMap,
    pub d: usize,
    pub coefficient_bound: Option<f64>,
}

impl LinearFeatureClass {
    pub fn new(features: FeatureMap, d: usize) -> Self {
        LinearFeatureClass {
            features,
            d,
            coefficient_bound: None,
        }
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.coefficient_bound = Some(bound);
        self
    }

    /// Rows `phi(x_i)` stacked into an `n x m` matrix.
    pub fn design_matrix(&self, xs: &[Vec<f64>]) -> Result<DMatrix<f64>, ModelError> {
        let p = xs.first().ok_or(ModelError::EmptyDataset)?.len();
        let m = self.features.dim(p);
        let mut phi = DMatrix::zeros(xs.len(), m);
        for (i, x) in xs.iter().enumerate() {
            let row = self.features.apply(x);
            if row.len() != m {
                return Err(ModelError::DimensionMismatch {
                    what: "feature vector",
                    expected: m,
                    got: row.len(),
                });
            }
            for (j, v) in row.into_iter().enumerate() {
                phi[(i, j)] = v;
            }
        }
        Ok(phi)
    }

    /// The member with coefficient matrix `theta` (`d x m`).
    pub fn predictor(&self, theta: DMatrix<f64>) -> Predictor {
        Predictor::linear(self.features.clone(), theta)
    }

    /// Euclidean projection of flattened coefficients onto the constraint set.
    pub fn project(&self, theta: &mut [f64]) {
        if let Some(bound) = self.coefficient_bound {
            let n = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > bound {
                let s = bound / n;
                theta.iter_mut().for_each(|v| *v *= s);
            }
        }
    }
}

/// The two concrete convex classes the crate can compute suprema over.
#[derive(Debug, Clone)]
pub enum FunctionClass {
    /// Every function on the design points, represented by per-point values.
    Unconstrained,
    Linear(LinearFeatureClass),
}

impl FunctionClass {
    pub fn tag(&self) -> &'static str {
        match self {
            FunctionClass::Unconstrained => "unconstrained",
            FunctionClass::Linear(_) => "linear-feature",
        }
    }

    /// Checks that the class can be fit on `ds`.
    pub fn check_dataset(&self, ds: &Dataset) -> Result<(), ModelError> {
        match self {
            FunctionClass::Unconstrained => check_distinct(ds.x()),
            FunctionClass::Linear(class) => {
                if class.d != ds.d() {
                    return Err(ModelError::DimensionMismatch {
                        what: "class outcome dimension",
                        expected: ds.d(),
                        got: class.d,
                    });
                }
                Ok(())
            }
        }
    }
}

pub(crate) fn check_distinct(xs: &[Vec<f64>]) -> Result<(), ModelError> {
    for i in 0..xs.len() {
        for j in (i + 1)..xs.len() {
            if xs[i] == xs[j] {
                return Err(ModelError::DuplicateDesignPoint {
                    first: i,
                    second: j,
                });
            }
        }
    }
    Ok(())
}
