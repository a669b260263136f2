use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::features::check_distinct;
use super::{rms, Dataset, FunctionClass, LinearFeatureClass, ModelError, Predictor};
use crate::losses::LossSpec;
use crate::optim::{projected_gradient_descent, GdSettings};

/// Smallest admissible eigenvalue ratio of the Gram matrix for unpenalized
/// least squares.
const GRAM_CONDITION_FLOOR: f64 = 1e-12;

/// A trained predictor and the trainer's own diagnostics.
#[derive(Debug, Clone)]
pub struct Fit {
    pub predictor: Predictor,
    /// First-order optimality residual of the empirical risk (without any
    /// penalty) in the class's parameter geometry: the Frobenius norm of the
    /// coefficient gradient for linear classes (gradient mapping when
    /// constrained), `||grad l||_n` for the unconstrained class.
    pub stationarity: f64,
    /// Gradient norm of the objective the trainer actually minimized.
    pub objective_gradient: f64,
    pub iterations: usize,
    /// Training loss per epoch, for iterative trainers that keep one.
    pub loss_trace: Vec<f64>,
}

/// Black-box training procedure `dataset -> predictor`.
///
/// Implementations must be deterministic: the same dataset and configuration
/// always produce the same predictor.
pub trait Trainer: Send + Sync {
    fn name(&self) -> &str;

    /// Stationarity level the trainer guarantees on success.
    fn tolerance(&self) -> f64;

    fn max_iter(&self) -> usize;

    fn fit(&self, ds: &Dataset) -> Result<Fit, ModelError>;
}

impl<T: Trainer + ?Sized> Trainer for Arc<T> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn tolerance(&self) -> f64 {
        (**self).tolerance()
    }
    fn max_iter(&self) -> usize {
        (**self).max_iter()
    }
    fn fit(&self, ds: &Dataset) -> Result<Fit, ModelError> {
        (**self).fit(ds)
    }
}

/// Exact penalized least squares,
/// `min (1/n) sum ||Theta phi(x_i) - y_i||^2 + lambda ||Theta||_F^2`,
/// solved through the normal equations.
#[derive(Debug, Clone)]
pub struct RidgeTrainer {
    pub lambda: f64,
    pub class: FunctionClass,
}

/// Tolerance advertised by the closed-form trainer.
pub const RIDGE_TOLERANCE: f64 = 1e-10;

impl RidgeTrainer {
    pub fn new(lambda: f64, class: FunctionClass) -> Result<Self, ModelError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(ModelError::InvalidConfig(format!(
                "ridge penalty must be finite and nonnegative, got {lambda}"
            )));
        }
        if let FunctionClass::Linear(LinearFeatureClass {
            coefficient_bound: Some(_),
            ..
        }) = class
        {
            return Err(ModelError::InvalidConfig(
                "the ridge trainer has no closed form on a bounded class; use convex-erm".into(),
            ));
        }
        Ok(RidgeTrainer { lambda, class })
    }

    fn fit_linear(&self, class: &LinearFeatureClass, ds: &Dataset) -> Result<Fit, ModelError> {
        let n = ds.n() as f64;
        let phi = class.design_matrix(ds.x())?;
        let m = phi.ncols();
        let y = DMatrix::from_fn(ds.n(), ds.d(), |i, j| ds.y()[i][j]);
        let gram = phi.transpose() * &phi / n;
        if self.lambda == 0.0 {
            let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
            let max_eig = eig.max();
            let min_eig = eig.min();
            if !(max_eig > 0.0) || min_eig < GRAM_CONDITION_FLOOR * max_eig {
                return Err(ModelError::SingularGram { min_eig, max_eig });
            }
        }
        let system = gram + DMatrix::identity(m, m) * self.lambda;
        let rhs = phi.transpose() * &y / n;
        let chol = system.cholesky().ok_or(ModelError::SingularGram {
            min_eig: 0.0,
            max_eig: 0.0,
        })?;
        let theta = chol.solve(&rhs).transpose();

        let resid = &phi * theta.transpose() - &y;
        let loss_grad = resid.transpose() * &phi * (2.0 / n);
        let obj_grad = &loss_grad + &theta * (2.0 * self.lambda);
        Ok(Fit {
            predictor: class.predictor(theta),
            stationarity: loss_grad.norm(),
            objective_gradient: obj_grad.norm(),
            iterations: 1,
            loss_trace: Vec::new(),
        })
    }

    fn fit_unconstrained(&self, ds: &Dataset) -> Result<Fit, ModelError> {
        check_distinct(ds.x())?;
        let shrink = 1.0 / (1.0 + ds.n() as f64 * self.lambda);
        let values: Vec<Vec<f64>> = ds
            .y()
            .iter()
            .map(|y| y.iter().map(|v| v * shrink).collect())
            .collect();
        let grads: Vec<Vec<f64>> = values
            .iter()
            .zip(ds.y())
            .map(|(z, y)| z.iter().zip(y).map(|(a, b)| 2.0 * (a - b)).collect())
            .collect();
        let n = ds.n() as f64;
        let obj: Vec<Vec<f64>> = grads
            .iter()
            .zip(&values)
            .map(|(g, z)| g.iter().zip(z).map(|(a, b)| a / n + 2.0 * self.lambda * b).collect())
            .collect();
        Ok(Fit {
            predictor: Predictor::table(ds.x().to_vec(), values)?,
            stationarity: rms(&grads),
            objective_gradient: rms(&obj) * n.sqrt(),
            iterations: 1,
            loss_trace: Vec::new(),
        })
    }
}

impl Trainer for RidgeTrainer {
    fn name(&self) -> &str {
        "ridge"
    }

    fn tolerance(&self) -> f64 {
        RIDGE_TOLERANCE
    }

    fn max_iter(&self) -> usize {
        1
    }

    fn fit(&self, ds: &Dataset) -> Result<Fit, ModelError> {
        self.class.check_dataset(ds)?;
        match &self.class {
            FunctionClass::Linear(class) => self.fit_linear(class, ds),
            FunctionClass::Unconstrained => self.fit_unconstrained(ds),
        }
    }
}

/// Empirical risk minimization for any [`LossSpec`] over a convex class by
/// (projected) gradient descent with backtracking.
#[derive(Debug, Clone)]
pub struct ConvexErmTrainer {
    pub spec: LossSpec,
    pub class: FunctionClass,
    pub tol: f64,
    pub max_iter: usize,
}

impl ConvexErmTrainer {
    pub fn new(
        spec: LossSpec,
        class: FunctionClass,
        tol: f64,
        max_iter: usize,
    ) -> Result<Self, ModelError> {
        if !(tol > 0.0) {
            return Err(ModelError::InvalidConfig(format!(
                "tolerance must be positive, got {tol}"
            )));
        }
        Ok(ConvexErmTrainer {
            spec,
            class,
            tol,
            max_iter,
        })
    }

    fn fit_linear(&self, class: &LinearFeatureClass, ds: &Dataset) -> Result<Fit, ModelError> {
        let n = ds.n();
        let d = ds.d();
        let phi = class.design_matrix(ds.x())?;
        let m = phi.ncols();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| phi.row(i).iter().copied().collect())
            .collect();
        let gram = phi.transpose() * &phi / n as f64;
        let lmax = SymmetricEigen::new(gram).eigenvalues.max().max(f64::MIN_POSITIVE);
        let safe_step = 1.0 / (self.spec.beta() * lmax);

        let spec = &self.spec;
        let y = ds.y();
        let predict = |theta: &[f64], i: usize| -> Vec<f64> {
            (0..d)
                .map(|a| {
                    theta[a * m..(a + 1) * m]
                        .iter()
                        .zip(&rows[i])
                        .map(|(t, f)| t * f)
                        .sum()
                })
                .collect()
        };
        let objective = |theta: &[f64]| -> f64 {
            (0..n)
                .map(|i| spec.value_raw(&predict(theta, i), &y[i]))
                .sum::<f64>()
                / n as f64
        };
        let gradient = |theta: &[f64]| -> Vec<f64> {
            let mut g = vec![0.0; d * m];
            for i in 0..n {
                let gi = spec.grad1_raw(&predict(theta, i), &y[i]);
                for a in 0..d {
                    for (k, f) in rows[i].iter().enumerate() {
                        g[a * m + k] += gi[a] * f;
                    }
                }
            }
            g.iter_mut().for_each(|v| *v /= n as f64);
            g
        };
        let out = projected_gradient_descent(
            vec![0.0; d * m],
            objective,
            gradient,
            |t| class.project(t),
            GdSettings {
                tol: self.tol,
                max_iter: self.max_iter,
                safe_step,
            },
        );
        if !out.objective.is_finite() {
            return Err(ModelError::NonFiniteLoss {
                epoch: out.iterations,
            });
        }
        if !out.converged {
            return Err(ModelError::NotConverged {
                iterations: out.iterations,
                residual: out.residual,
                last_params: out.x,
            });
        }
        let theta = DMatrix::from_row_slice(d, m, &out.x);
        Ok(Fit {
            predictor: class.predictor(theta),
            stationarity: out.residual,
            objective_gradient: out.residual,
            iterations: out.iterations,
            loss_trace: Vec::new(),
        })
    }

    fn fit_unconstrained(&self, ds: &Dataset) -> Result<Fit, ModelError> {
        check_distinct(ds.x())?;
        let n = ds.n();
        let d = ds.d();
        let spec = &self.spec;
        let y = ds.y();
        let objective = |z: &[f64]| -> f64 {
            (0..n)
                .map(|i| spec.value_raw(&z[i * d..(i + 1) * d], &y[i]))
                .sum::<f64>()
                / n as f64
        };
        let gradient = |z: &[f64]| -> Vec<f64> {
            let mut g = Vec::with_capacity(n * d);
            for i in 0..n {
                g.extend(
                    spec.grad1_raw(&z[i * d..(i + 1) * d], &y[i])
                        .into_iter()
                        .map(|v| v / n as f64),
                );
            }
            g
        };
        // The flat gradient norm is ||grad l||_n / sqrt(n).
        let scale = (n as f64).sqrt();
        let out = projected_gradient_descent(
            y.concat(),
            objective,
            gradient,
            |_| {},
            GdSettings {
                tol: self.tol / scale,
                max_iter: self.max_iter,
                safe_step: n as f64 / self.spec.beta(),
            },
        );
        if !out.converged {
            return Err(ModelError::NotConverged {
                iterations: out.iterations,
                residual: out.residual * scale,
                last_params: out.x,
            });
        }
        let values: Vec<Vec<f64>> = out.x.chunks(d).map(|c| c.to_vec()).collect();
        Ok(Fit {
            predictor: Predictor::table(ds.x().to_vec(), values)?,
            stationarity: out.residual * scale,
            objective_gradient: out.residual,
            iterations: out.iterations,
            loss_trace: Vec::new(),
        })
    }
}

impl Trainer for ConvexErmTrainer {
    fn name(&self) -> &str {
        "convex-erm"
    }

    fn tolerance(&self) -> f64 {
        self.tol
    }

    fn max_iter(&self) -> usize {
        self.max_iter
    }

    fn fit(&self, ds: &Dataset) -> Result<Fit, ModelError> {
        self.class.check_dataset(ds)?;
        match &self.class {
            FunctionClass::Linear(class) => self.fit_linear(class, ds),
            FunctionClass::Unconstrained => self.fit_unconstrained(ds),
        }
    }
}

/// Small fully connected network trained by full-batch gradient descent.
/// Nonconvex, so no optimality is claimed; the final gradient norm is
/// reported as the stationarity residual.
#[derive(Debug, Clone)]
pub struct MlpTrainer {
    /// Layer sizes `[p, hidden..., d]`.
    pub widths: Vec<usize>,
    pub seed: u64,
    pub epochs: usize,
    pub step: f64,
    pub spec: LossSpec,
}

type Layers = Vec<(DMatrix<f64>, DVector<f64>)>;

impl MlpTrainer {
    pub fn new(
        widths: Vec<usize>,
        seed: u64,
        epochs: usize,
        step: f64,
        spec: LossSpec,
    ) -> Result<Self, ModelError> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(ModelError::InvalidConfig(
                "mlp widths need at least an input and an output size, all positive".into(),
            ));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(ModelError::InvalidConfig(format!(
                "mlp step must be positive, got {step}"
            )));
        }
        Ok(MlpTrainer {
            widths,
            seed,
            epochs,
            step,
            spec,
        })
    }

    /// Seeded initialization: weights `N(0, 1/fan_in)`, zero biases.
    pub fn initial_layers(&self) -> Layers {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let s = 1.0 / (fan_in as f64).sqrt();
                let weights = DMatrix::from_fn(fan_out, fan_in, |_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    s * z
                });
                (weights, DVector::zeros(fan_out))
            })
            .collect()
    }

    /// Mean loss and parameter gradient.
    fn loss_and_grad(&self, layers: &Layers, ds: &Dataset) -> (f64, Layers) {
        let n = ds.n() as f64;
        let mut grads: Layers = layers
            .iter()
            .map(|(w, b)| (DMatrix::zeros(w.nrows(), w.ncols()), DVector::zeros(b.len())))
            .collect();
        let mut total = 0.0;
        for (x, y) in ds.x().iter().zip(ds.y()) {
            let mut acts = vec![DVector::from_column_slice(x)];
            for (k, (w, b)) in layers.iter().enumerate() {
                let mut a = w * acts.last().unwrap() + b;
                if k + 1 < layers.len() {
                    a.apply(|v| *v = v.tanh());
                }
                acts.push(a);
            }
            let out = acts.last().unwrap().as_slice();
            total += self.spec.value_raw(out, y);
            let mut delta = DVector::from_vec(self.spec.grad1_raw(out, y)) / n;
            for k in (0..layers.len()).rev() {
                grads[k].0 += &delta * acts[k].transpose();
                grads[k].1 += &delta;
                if k > 0 {
                    let back = layers[k].0.transpose() * &delta;
                    delta = back.component_mul(&acts[k].map(|a| 1.0 - a * a));
                }
            }
        }
        (total / n, grads)
    }
}

impl Trainer for MlpTrainer {
    fn name(&self) -> &str {
        "mlp"
    }

    /// No stationarity guarantee.
    fn tolerance(&self) -> f64 {
        f64::INFINITY
    }

    fn max_iter(&self) -> usize {
        self.epochs
    }

    fn fit(&self, ds: &Dataset) -> Result<Fit, ModelError> {
        let (p, d) = (self.widths[0], *self.widths.last().unwrap());
        if ds.p() != p || ds.d() != d {
            return Err(ModelError::InvalidConfig(format!(
                "mlp widths expect p = {p}, d = {d} but the dataset has p = {}, d = {}",
                ds.p(),
                ds.d()
            )));
        }
        let mut layers = self.initial_layers();
        let mut trace = Vec::with_capacity(self.epochs + 1);
        let mut grad_norm = 0.0;
        for epoch in 0..=self.epochs {
            let (loss, grads) = self.loss_and_grad(&layers, ds);
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch });
            }
            trace.push(loss);
            grad_norm = grads
                .iter()
                .map(|(w, b)| w.norm_squared() + b.norm_squared())
                .sum::<f64>()
                .sqrt();
            if epoch == self.epochs {
                break;
            }
            for ((w, b), (gw, gb)) in layers.iter_mut().zip(&grads) {
                *w -= gw * self.step;
                *b -= gb * self.step;
            }
        }
        Ok(Fit {
            predictor: Predictor::mlp(layers),
            stationarity: grad_norm,
            objective_gradient: grad_norm,
            iterations: self.epochs,
            loss_trace: trace,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{LogPartition, RegularizedExpFamilyLoss};
    use crate::models::FeatureMap;
    use rand::Rng;

    fn random_dataset(n: usize, p: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<Vec<f64>> = x
            .iter()
            .map(|xi| {
                (0..d)
                    .map(|a| xi.iter().sum::<f64>() * (a as f64 + 1.0) + rng.random_range(-0.5..0.5))
                    .collect()
            })
            .collect();
        Dataset::new(x, y).unwrap()
    }

    fn affine(d: usize) -> FunctionClass {
        FunctionClass::Linear(LinearFeatureClass::new(FeatureMap::Affine, d))
    }

    #[test]
    fn ridge_intercept_is_mean() {
        let ds = Dataset::new(vec![vec![0.0], vec![1.0]], vec![vec![0.0], vec![2.0]]).unwrap();
        let class = FunctionClass::Linear(LinearFeatureClass::new(FeatureMap::Intercept, 1));
        let fit = RidgeTrainer::new(0.0, class).unwrap().fit(&ds).unwrap();
        assert!((fit.predictor.params().unwrap()[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ridge_large_penalty_shrinks_to_zero() {
        let ds = random_dataset(20, 2, 1, 3);
        let fit = RidgeTrainer::new(1e9, affine(1)).unwrap().fit(&ds).unwrap();
        assert!(fit.predictor.params().unwrap().iter().all(|t| t.abs() < 1e-6));
    }

    #[test]
    fn ridge_first_order_optimality() {
        let ds = random_dataset(20, 2, 2, 4);
        let class = FunctionClass::Linear(LinearFeatureClass::new(FeatureMap::Affine, 2));
        for lambda in [0.0, 0.1] {
            let fit = RidgeTrainer::new(lambda, class.clone()).unwrap().fit(&ds).unwrap();
            assert!(fit.objective_gradient <= 1e-8, "{}", fit.objective_gradient);
        }
    }

    #[test]
    fn ridge_rejects_singular_gram() {
        let ds = Dataset::new(vec![vec![1.0]; 3], vec![vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let err = RidgeTrainer::new(0.0, affine(1)).unwrap().fit(&ds).unwrap_err();
        assert!(matches!(err, ModelError::SingularGram { .. }));
    }

    #[test]
    fn convex_erm_matches_ridge_on_squared_loss() {
        let ds = random_dataset(30, 2, 2, 5);
        let ridge = RidgeTrainer::new(0.0, affine(2)).unwrap().fit(&ds).unwrap();
        let erm = ConvexErmTrainer::new(LossSpec::squared(), affine(2), 1e-10, 100_000)
            .unwrap()
            .fit(&ds)
            .unwrap();
        let (a, b) = (ridge.predictor.params().unwrap(), erm.predictor.params().unwrap());
        for (s, t) in a.iter().zip(&b) {
            assert!((s - t).abs() < 1e-6);
        }
    }

    #[test]
    fn convex_erm_gaussian_expfam_matches_linear_solve() {
        // (1 + mu) Theta phi = y in least squares: Theta = ridge(0) / (1 + mu).
        let ds = random_dataset(25, 1, 1, 6);
        let mu = 0.5;
        let spec = LossSpec::new(RegularizedExpFamilyLoss::new(LogPartition::Gaussian, mu).unwrap());
        let erm = ConvexErmTrainer::new(spec, affine(1), 1e-11, 100_000)
            .unwrap()
            .fit(&ds)
            .unwrap();
        let ridge = RidgeTrainer::new(0.0, affine(1)).unwrap().fit(&ds).unwrap();
        for (s, t) in erm
            .predictor
            .params()
            .unwrap()
            .iter()
            .zip(ridge.predictor.params().unwrap())
        {
            assert!((s - t / (1.0 + mu)).abs() < 1e-6);
        }
    }

    #[test]
    fn convex_erm_constant_outcomes() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let ds = Dataset::new(x, vec![vec![1.5]; 5]).unwrap();
        let class = FunctionClass::Linear(LinearFeatureClass::new(FeatureMap::Intercept, 1));
        let fit = ConvexErmTrainer::new(LossSpec::squared(), class, 1e-12, 1000)
            .unwrap()
            .fit(&ds)
            .unwrap();
        let z = fit.predictor.evaluate(&[0.0]).unwrap();
        assert!(LossSpec::squared().grad1(&z, &[1.5]).unwrap()[0].abs() < 1e-12);
    }

    #[test]
    fn convex_erm_reports_budget_exhaustion() {
        let ds = random_dataset(10, 1, 1, 8);
        let err = ConvexErmTrainer::new(LossSpec::squared(), affine(1), 1e-14, 1)
            .unwrap()
            .fit(&ds)
            .unwrap_err();
        assert!(matches!(err, ModelError::NotConverged { iterations: 1, .. }));
    }

    #[test]
    fn convex_erm_unconstrained_interpolates_squared() {
        let ds = random_dataset(6, 1, 2, 9);
        let fit = ConvexErmTrainer::new(LossSpec::squared(), FunctionClass::Unconstrained, 1e-10, 100)
            .unwrap()
            .fit(&ds)
            .unwrap();
        assert_eq!(fit.predictor.predict_all(ds.x()).unwrap(), ds.y().to_vec());
    }

    #[test]
    fn mlp_deterministic_and_descending() {
        let ds = random_dataset(20, 2, 1, 10);
        let t = MlpTrainer::new(vec![2, 4, 1], 7, 50, 0.01, LossSpec::squared()).unwrap();
        let a = t.fit(&ds).unwrap();
        let b = t.fit(&ds).unwrap();
        assert_eq!(a.predictor.params(), b.predictor.params());
        assert!(a.loss_trace.windows(2).all(|w| w[1] <= w[0]));

        let zero = MlpTrainer::new(vec![2, 4, 1], 7, 0, 0.01, LossSpec::squared()).unwrap();
        let init: Vec<f64> = zero
            .initial_layers()
            .into_iter()
            .flat_map(|(w, b)| {
                let mut v: Vec<f64> = (0..w.nrows())
                    .flat_map(|i| (0..w.ncols()).map(move |j| (i, j)))
                    .map(|(i, j)| w[(i, j)])
                    .collect();
                v.extend(b.iter());
                v
            })
            .collect();
        assert_eq!(zero.fit(&ds).unwrap().predictor.params().unwrap(), init);
    }
}
