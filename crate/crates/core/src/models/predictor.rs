use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::features::nearest;
use super::{FeatureMap, ModelError};

type PredictFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
enum Repr {
    Linear {
        features: FeatureMap,
        theta: DMatrix<f64>,
    },
    Table {
        x: Arc<Vec<Vec<f64>>>,
        values: Vec<Vec<f64>>,
    },
    Mlp {
        layers: Vec<(DMatrix<f64>, DVector<f64>)>,
    },
    Function {
        out_dim: usize,
        f: PredictFn,
    },
}

/// A deterministic map `x -> R^d`, cheap to clone and safe to share.
#[derive(Clone)]
pub struct Predictor {
    repr: Repr,
    class_tag: String,
}

impl fmt::Debug for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.repr {
            Repr::Linear { features, theta } => {
                format!("linear({features:?}, {}x{})", theta.nrows(), theta.ncols())
            }
            Repr::Table { values, .. } => format!("table({} points)", values.len()),
            Repr::Mlp { layers } => format!("mlp({} layers)", layers.len()),
            Repr::Function { out_dim, .. } => format!("function(-> R^{out_dim})"),
        };
        write!(f, "Predictor[{}: {kind}]", self.class_tag)
    }
}

impl Predictor {
    /// `x -> theta * phi(x)`, `theta` of shape `d x m`.
    pub fn linear(features: FeatureMap, theta: DMatrix<f64>) -> Self {
        Predictor {
            repr: Repr::Linear { features, theta },
            class_tag: "linear-feature".into(),
        }
    }

    /// A member of the unconstrained class: `values[i]` at design point
    /// `x[i]`. Inputs off the design are answered by the nearest design point.
    pub fn table(x: Vec<Vec<f64>>, values: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        Self::table_shared(Arc::new(x), values)
    }

    pub(crate) fn table_shared(
        x: Arc<Vec<Vec<f64>>>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        if x.len() != values.len() {
            return Err(ModelError::LengthMismatch {
                x: x.len(),
                y: values.len(),
            });
        }
        if values.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let d = values[0].len();
        if let Some(index) = values.iter().position(|v| v.len() != d) {
            return Err(ModelError::Ragged {
                what: "table value",
                index,
                expected: d,
                got: values[index].len(),
            });
        }
        Ok(Predictor {
            repr: Repr::Table { x, values },
            class_tag: "unconstrained".into(),
        })
    }

    /// Feed-forward network: `tanh` on hidden layers, identity on the last.
    pub fn mlp(layers: Vec<(DMatrix<f64>, DVector<f64>)>) -> Self {
        Predictor {
            repr: Repr::Mlp { layers },
            class_tag: "mlp".into(),
        }
    }

    /// Wraps an arbitrary function, e.g. a known regression function.
    pub fn from_fn(
        out_dim: usize,
        f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Predictor {
            repr: Repr::Function {
                out_dim,
                f: Arc::new(f),
            },
            class_tag: "custom".into(),
        }
    }

    pub fn with_class_tag(mut self, tag: impl Into<String>) -> Self {
        self.class_tag = tag.into();
        self
    }

    pub fn class_tag(&self) -> &str {
        &self.class_tag
    }

    pub fn out_dim(&self) -> usize {
        match &self.repr {
            Repr::Linear { theta, .. } => theta.nrows(),
            Repr::Table { values, .. } => values[0].len(),
            Repr::Mlp { layers } => layers.last().map_or(0, |(w, _)| w.nrows()),
            Repr::Function { out_dim, .. } => *out_dim,
        }
    }

    /// Coefficient matrix of a linear predictor.
    pub fn theta(&self) -> Option<&DMatrix<f64>> {
        match &self.repr {
            Repr::Linear { theta, .. } => Some(theta),
            _ => None,
        }
    }

    /// Flat parameter vector for built-in classes (row-major coefficients,
    /// table values, or layer weights followed by biases).
    pub fn params(&self) -> Option<Vec<f64>> {
        match &self.repr {
            Repr::Linear { theta, .. } => Some(row_major(theta)),
            Repr::Table { values, .. } => Some(values.concat()),
            Repr::Mlp { layers } => {
                let mut out = Vec::new();
                for (w, b) in layers {
                    out.extend(row_major(w));
                    out.extend(b.iter().copied());
                }
                Some(out)
            }
            Repr::Function { .. } => None,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        let out = match &self.repr {
            Repr::Linear { features, theta } => {
                let phi = features.apply(x);
                if phi.len() != theta.ncols() {
                    return Err(ModelError::DimensionMismatch {
                        what: "feature vector",
                        expected: theta.ncols(),
                        got: phi.len(),
                    });
                }
                (theta * DVector::from_vec(phi)).as_slice().to_vec()
            }
            Repr::Table { x: design, values } => {
                if design[0].len() != x.len() {
                    return Err(ModelError::DimensionMismatch {
                        what: "covariate",
                        expected: design[0].len(),
                        got: x.len(),
                    });
                }
                values[nearest(design, x)].clone()
            }
            Repr::Mlp { layers } => {
                let input = layers.first().map_or(0, |(w, _)| w.ncols());
                if input != x.len() {
                    return Err(ModelError::DimensionMismatch {
                        what: "covariate",
                        expected: input,
                        got: x.len(),
                    });
                }
                let mut a = DVector::from_column_slice(x);
                for (k, (w, b)) in layers.iter().enumerate() {
                    a = w * a + b;
                    if k + 1 < layers.len() {
                        a.apply(|v| *v = v.tanh());
                    }
                }
                a.as_slice().to_vec()
            }
            Repr::Function { out_dim, f } => {
                let v = f(x);
                if v.len() != *out_dim {
                    return Err(ModelError::DimensionMismatch {
                        what: "function output",
                        expected: *out_dim,
                        got: v.len(),
                    });
                }
                v
            }
        };
        Ok(out)
    }

    /// Values at every row of `xs`.
    pub fn predict_all(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError> {
        if let Repr::Table { x: design, values } = &self.repr {
            // Fast path for the design itself.
            if design.as_slice() == xs {
                return Ok(values.clone());
            }
        }
        xs.iter().map(|x| self.evaluate(x)).collect()
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_evaluation() {
        let theta = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let f = Predictor::linear(FeatureMap::Affine, theta);
        assert_eq!(f.evaluate(&[1.0]).unwrap(), vec![3.0, 7.0]);
        assert_eq!(f.params().unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(f.evaluate(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn table_lookup() {
        let f = Predictor::table(vec![vec![0.0], vec![1.0]], vec![vec![5.0], vec![6.0]]).unwrap();
        assert_eq!(f.evaluate(&[1.0]).unwrap(), vec![6.0]);
        assert_eq!(f.evaluate(&[0.2]).unwrap(), vec![5.0]);
        assert_eq!(f.out_dim(), 1);
        assert_eq!(f.class_tag(), "unconstrained");
    }

    #[test]
    fn function_output_checked() {
        let f = Predictor::from_fn(2, |x| vec![x[0]]);
        assert!(f.evaluate(&[1.0]).is_err());
    }
}
