//! Suprema of linear empirical processes over localized balls
//! `{f in F : ||f - c||_n <= r}`.
//!
//! For the unconstrained class the supremum is `r ||v||_n`. For a linear
//! feature class the problem is a linear objective over an ellipsoid in
//! coefficient space, optionally intersected with a Frobenius ball. It is
//! solved by projected gradient ascent in the eigenbasis of the Gram matrix,
//! where the ellipsoid is axis-aligned. The support function of the ellipsoid
//! serves as a certificate.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RiskError;
use crate::models::{rms, Dataset, FunctionClass, LinearFeatureClass, Predictor};

/// Gram eigenvalues below this fraction of the largest are treated as null.
const NULL_EIGEN_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupSettings {
    /// Projected-ascent iterations per restart.
    pub iterations: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Run projected ascent even when the closed-form support function is
    /// available, as a cross-check.
    pub certify: bool,
}

impl Default for SupSettings {
    fn default() -> Self {
        SupSettings {
            iterations: 200,
            restarts: 10,
            seed: 0,
            certify: true,
        }
    }
}

/// A supremum value with its certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupValue {
    pub value: f64,
    /// Exact value when one is available.
    pub closed_form: Option<f64>,
    /// Gap between the certified upper bound and the ascent value (zero when
    /// only the closed form was used).
    pub slack: f64,
    pub iterations: usize,
}

impl SupValue {
    fn exact(value: f64) -> Self {
        SupValue {
            value,
            closed_form: Some(value),
            slack: 0.0,
            iterations: 0,
        }
    }
}

/// A supremum problem with everything that does not depend on `r`
/// precomputed, so it can be evaluated at many radii.
#[derive(Debug, Clone)]
pub enum SupProblem {
    Unconstrained { v_norm: f64 },
    Linear(Box<LinearSupProblem>),
}

impl SupProblem {
    /// Sets up `sup_{f in class, ||f - c||_n <= r} (1/n) sum_i <v_i, f(x_i) - c_i>`.
    pub fn new(
        class: &FunctionClass,
        xs: &[Vec<f64>],
        center: &[Vec<f64>],
        v: &[Vec<f64>],
        settings: SupSettings,
    ) -> Result<Self, RiskError> {
        if v.len() != xs.len() || center.len() != xs.len() {
            return Err(RiskError::InvalidInput(format!(
                "{} design points, {} directions, {} center values",
                xs.len(),
                v.len(),
                center.len()
            )));
        }
        match class {
            FunctionClass::Unconstrained => Ok(SupProblem::Unconstrained { v_norm: rms(v) }),
            FunctionClass::Linear(lin) => Ok(SupProblem::Linear(Box::new(
                LinearSupProblem::new(lin, xs, center, v, settings)?,
            ))),
        }
    }

    pub fn value(&self, r: f64) -> Result<SupValue, RiskError> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(RiskError::NegativeRadius(r));
        }
        if r == 0.0 {
            return Ok(SupValue::exact(0.0));
        }
        match self {
            SupProblem::Unconstrained { v_norm } => Ok(SupValue::exact(r * v_norm)),
            SupProblem::Linear(p) => p.value(r),
        }
    }
}

/// Linear-class problem in the eigen-coordinates `W` (`d x k`) of the Gram
/// matrix `Phi^T Phi / n = U diag(lambda) U^T`, with `Theta = W U_k^T`.
#[derive(Debug, Clone)]
pub struct LinearSupProblem {
    lambda: Vec<f64>,
    /// Objective gradient `G[a][j]`.
    grad: Vec<Vec<f64>>,
    /// Projection of the center onto the class, in eigen-coordinates.
    w0: Vec<Vec<f64>>,
    /// `||c - Pc||_n`: distance from the center to the class.
    center_gap: f64,
    /// `(1/n) sum_i <v_i, c_i>`.
    offset: f64,
    /// The center is a class member up to round-off, so `f = c` is feasible
    /// and the supremum is at least zero.
    center_in_class: bool,
    bound: Option<f64>,
    settings: SupSettings,
}

impl LinearSupProblem {
    pub fn new(
        class: &LinearFeatureClass,
        xs: &[Vec<f64>],
        center: &[Vec<f64>],
        v: &[Vec<f64>],
        settings: SupSettings,
    ) -> Result<Self, RiskError> {
        let n = xs.len();
        let d = class.d;
        if v.iter().chain(center).any(|row| row.len() != d) {
            return Err(RiskError::InvalidInput(format!(
                "directions and center values must have dimension {d}"
            )));
        }
        let phi = class.design_matrix(xs)?;
        let nf = n as f64;
        let eig = SymmetricEigen::new(phi.transpose() * &phi / nf);
        let lmax = eig.eigenvalues.max();
        let keep: Vec<usize> = (0..eig.eigenvalues.len())
            .filter(|&j| eig.eigenvalues[j] > NULL_EIGEN_RATIO * lmax)
            .collect();
        let lambda: Vec<f64> = keep.iter().map(|&j| eig.eigenvalues[j]).collect();
        let u_k = DMatrix::from_fn(phi.ncols(), keep.len(), |r, c| eig.eigenvectors[(r, keep[c])]);
        let psi = &phi * &u_k; // n x k, Psi^T Psi / n = diag(lambda)

        let vm = DMatrix::from_fn(n, d, |i, a| v[i][a]);
        let cm = DMatrix::from_fn(n, d, |i, a| center[i][a]);
        let g = psi.transpose() * &vm / nf; // k x d
        let pc = psi.transpose() * &cm / nf; // k x d
        let grad: Vec<Vec<f64>> = (0..d)
            .map(|a| (0..lambda.len()).map(|j| g[(j, a)]).collect())
            .collect();
        let w0: Vec<Vec<f64>> = (0..d)
            .map(|a| (0..lambda.len()).map(|j| pc[(j, a)] / lambda[j]).collect())
            .collect();
        let w0m = DMatrix::from_fn(lambda.len(), d, |j, a| w0[a][j]);
        let resid = &cm - &psi * w0m;
        let center_gap = (resid.norm_squared() / nf).sqrt();
        let offset = vm.component_mul(&cm).sum() / nf;
        let center_in_class = center_gap <= 1e-10 * (1.0 + (cm.norm_squared() / nf).sqrt());
        Ok(LinearSupProblem {
            lambda,
            grad,
            w0,
            center_gap,
            offset,
            center_in_class,
            bound: class.coefficient_bound,
            settings,
        })
    }

    fn objective(&self, w: &[Vec<f64>]) -> f64 {
        dot2(&self.grad, w) - self.offset
    }

    /// Squared ellipsoid radius `s^2 = r^2 - ||c - Pc||_n^2`.
    fn ellipsoid_radius(&self, r: f64) -> Result<f64, RiskError> {
        let gap2 = self.center_gap * self.center_gap;
        let s2 = r * r - gap2;
        if s2 < -1e-12 * (1.0 + gap2) {
            return Err(RiskError::EmptyBall {
                r,
                distance: self.center_gap,
            });
        }
        Ok(s2.max(0.0).sqrt())
    }

    /// Support function of the ellipsoid alone: exact without a coefficient
    /// bound, an upper bound with one.
    fn support(&self, s: f64) -> f64 {
        let q: f64 = self
            .grad
            .iter()
            .flat_map(|row| row.iter().zip(&self.lambda).map(|(g, l)| g * g / l))
            .sum();
        s * q.sqrt() + self.objective(&self.w0)
    }

    /// Euclidean projection onto `{w : sum lambda_j (w - w0)^2 <= s^2}`.
    fn project_ellipsoid(&self, y: &mut [Vec<f64>], s: f64) {
        let dev = |tau: f64, y: &[Vec<f64>]| -> (f64, f64) {
            let mut phi = 0.0;
            let mut dphi = 0.0;
            for (row, w0) in y.iter().zip(&self.w0) {
                for ((yj, w0j), l) in row.iter().zip(w0).zip(&self.lambda) {
                    let e = (yj - w0j) * (yj - w0j);
                    let den = 1.0 + tau * l;
                    phi += l * e / (den * den);
                    dphi -= 2.0 * l * l * e / (den * den * den);
                }
            }
            (phi, dphi)
        };
        let (phi0, _) = dev(0.0, y);
        if phi0 <= s * s {
            return;
        }
        let tau = if s == 0.0 {
            f64::INFINITY
        } else {
            // Newton on psi(tau) = phi^{-1/2} - 1/s: concave and increasing,
            // so iterates from tau = 0 approach the root from the left.
            let mut tau = 0.0_f64;
            for _ in 0..100 {
                let (phi, dphi) = dev(tau, y);
                let psi = phi.powf(-0.5) - 1.0 / s;
                if psi >= 0.0 {
                    break;
                }
                let dpsi = -0.5 * phi.powf(-1.5) * dphi;
                let next = tau - psi / dpsi;
                if !(next > tau) {
                    break;
                }
                let done = (next - tau) <= 1e-15 * next;
                tau = next;
                if done {
                    break;
                }
            }
            tau
        };
        for (row, w0) in y.iter_mut().zip(&self.w0) {
            for ((yj, w0j), l) in row.iter_mut().zip(w0).zip(&self.lambda) {
                *yj = if tau.is_infinite() {
                    *w0j
                } else {
                    w0j + (*yj - w0j) / (1.0 + tau * l)
                };
            }
        }
        // Guard against rounding leaving the point marginally outside.
        let (phi, _) = dev(0.0, y);
        if phi > s * s && phi > 0.0 {
            let shrink = s / phi.sqrt();
            for (row, w0) in y.iter_mut().zip(&self.w0) {
                for (yj, w0j) in row.iter_mut().zip(w0) {
                    *yj = w0j + (*yj - w0j) * shrink;
                }
            }
        }
    }

    /// Projection onto the feasible set (ellipsoid, intersected with the
    /// Frobenius ball when bounded, via Dykstra's algorithm).
    fn project(&self, y: &mut Vec<Vec<f64>>, s: f64) {
        let Some(bound) = self.bound else {
            self.project_ellipsoid(y, s);
            return;
        };
        let zero = |w: &[Vec<f64>]| w.iter().map(|r| vec![0.0; r.len()]).collect::<Vec<_>>();
        let mut p = zero(y);
        let mut q = zero(y);
        let mut x = y.clone();
        for _ in 0..500 {
            let mut a: Vec<Vec<f64>> = add2(&x, &p);
            self.project_ellipsoid(&mut a, s);
            p = add2(&x, &p).iter().zip(&a).map(|(u, v)| sub1(u, v)).collect();
            let mut b = add2(&a, &q);
            let nb = dot2(&b, &b).sqrt();
            if nb > bound {
                b.iter_mut().flatten().for_each(|v| *v *= bound / nb);
            }
            q = add2(&a, &q).iter().zip(&b).map(|(u, v)| sub1(u, v)).collect();
            let change: f64 = x
                .iter()
                .zip(&b)
                .map(|(u, v)| u.iter().zip(v).map(|(s, t)| (s - t) * (s - t)).sum::<f64>())
                .sum();
            x = b;
            if change <= 1e-30 * (1.0 + dot2(&x, &x)) {
                break;
            }
        }
        *y = x;
    }

    /// Projected gradient ascent with a doubling step from one start.
    fn ascend(&self, start: Vec<Vec<f64>>, s: f64) -> (f64, usize) {
        let mut w = start;
        self.project(&mut w, s);
        let scale: f64 = self.lambda.iter().cloned().fold(0.0, f64::max).max(1e-300);
        let mut eta = 1.0 / scale;
        let mut best = self.objective(&w);
        let mut still = 0;
        let mut it = 0;
        while it < self.settings.iterations {
            it += 1;
            let mut next: Vec<Vec<f64>> = w
                .iter()
                .zip(&self.grad)
                .map(|(row, g)| row.iter().zip(g).map(|(a, b)| a + eta * b).collect())
                .collect();
            self.project(&mut next, s);
            let val = self.objective(&next);
            if val <= best + 1e-15 * (1.0 + best.abs()) {
                still += 1;
            } else {
                still = 0;
            }
            if val >= best {
                best = val;
                w = next;
            }
            if still >= 3 {
                break;
            }
            eta *= 2.0;
        }
        (best, it)
    }

    pub fn value(&self, r: f64) -> Result<SupValue, RiskError> {
        let mut v = self.value_raw(r)?;
        if self.center_in_class && v.value < 0.0 {
            // Cancellation in `<v, Pc> - <v, c>` when `v` is tiny.
            v.value = 0.0;
            v.closed_form = v.closed_form.map(|c| c.max(0.0));
        }
        Ok(v)
    }

    fn value_raw(&self, r: f64) -> Result<SupValue, RiskError> {
        let s = self.ellipsoid_radius(r)?;
        let support = self.support(s);
        if self.bound.is_none() && !self.settings.certify {
            return Ok(SupValue::exact(support));
        }
        let k = self.lambda.len();
        let seeds: Vec<u64> = (0..self.settings.restarts.max(1) as u64)
            .map(|j| self.settings.seed.wrapping_add(j))
            .collect();
        let runs: Vec<(f64, usize)> = seeds
            .par_iter()
            .enumerate()
            .map(|(j, &seed)| {
                let start = if j == 0 {
                    self.w0.clone()
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    self.w0
                        .iter()
                        .map(|row| {
                            (0..k)
                                .map(|c| row[c] + s * rng.random_range(-1.0..1.0) / self.lambda[c].sqrt())
                                .collect()
                        })
                        .collect()
                };
                self.ascend(start, s)
            })
            .collect();
        let (ascent, iterations) = runs
            .iter()
            .fold((f64::NEG_INFINITY, 0), |(b, it), &(v, i)| (b.max(v), it + i));
        if self.bound.is_none() {
            Ok(SupValue {
                value: support,
                closed_form: Some(support),
                slack: (support - ascent).abs(),
                iterations,
            })
        } else {
            Ok(SupValue {
                value: ascent,
                closed_form: None,
                slack: (support - ascent).max(0.0),
                iterations,
            })
        }
    }
}

fn dot2(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| u.iter().zip(v).map(|(s, t)| s * t).sum::<f64>())
        .sum()
}

fn add2(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(u, v)| u.iter().zip(v).map(|(s, t)| s + t).collect())
        .collect()
}

fn sub1(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(s, t)| s - t).collect()
}

/// One-shot supremum around the predictor `center` on the design of `ds`.
pub fn sup_process(
    class: &FunctionClass,
    center: &Predictor,
    v: &[Vec<f64>],
    r: f64,
    ds: &Dataset,
    settings: SupSettings,
) -> Result<SupValue, RiskError> {
    let c = center.predict_all(ds.x())?;
    SupProblem::new(class, ds.x(), &c, v, settings)?.value(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::FeatureMap;
    use std::sync::Arc;

    fn design(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![i as f64 / n as f64]).collect()
    }

    #[test]
    fn unconstrained_examples() {
        let xs = design(2);
        let c = vec![vec![0.0]; 2];
        let p = SupProblem::new(
            &FunctionClass::Unconstrained,
            &xs,
            &c,
            &[vec![2.0], vec![-2.0]],
            SupSettings::default(),
        )
        .unwrap();
        assert_eq!(p.value(1.0).unwrap().value, 2.0);
        assert_eq!(p.value(0.0).unwrap().value, 0.0);
        assert!(p.value(-1.0).is_err());
    }

    #[test]
    fn indicator_class_matches_unconstrained() {
        let n = 5;
        let xs = design(n);
        let class = FunctionClass::Linear(LinearFeatureClass::new(
            FeatureMap::Indicator(Arc::new(xs.clone())),
            2,
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let c: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, 1.0]).collect();
        let lin = SupProblem::new(&class, &xs, &c, &v, SupSettings::default()).unwrap();
        let un = SupProblem::new(&FunctionClass::Unconstrained, &xs, &c, &v, SupSettings::default())
            .unwrap();
        for r in [0.1, 1.0, 3.0] {
            let a = lin.value(r).unwrap();
            let b = un.value(r).unwrap().value;
            assert!((a.value - b).abs() <= 1e-10 * b, "{a:?} vs {b}");
            assert!(a.slack <= 1e-8 * b, "{a:?}");
        }
    }

    #[test]
    fn member_center_never_gives_a_negative_supremum() {
        // A tiny direction against a large affine center: the offset
        // cancels to round-off and must not leave a negative value.
        let xs = design(7);
        let class = FunctionClass::Linear(LinearFeatureClass::new(FeatureMap::Affine, 1));
        let c: Vec<Vec<f64>> = xs.iter().map(|x| vec![3.7 + 1.9 * x[0]]).collect();
        for k in 0..50 {
            let v: Vec<Vec<f64>> = (0..7).map(|i| vec![1e-16 * ((i * 7 + k) % 5) as f64 - 2e-16]).collect();
            let p = SupProblem::new(&class, &xs, &c, &v, SupSettings::default()).unwrap();
            for r in [1e-12, 1e-3, 1.0] {
                assert!(p.value(r).unwrap().value >= 0.0);
            }
        }
    }

    #[test]
    fn center_outside_class() {
        // Intercept-only class, center (0, 1): distance to class 0.5.
        let xs = design(2);
        let class = FunctionClass::Linear(LinearFeatureClass::new(FeatureMap::Intercept, 1));
        let c = vec![vec![0.0], vec![1.0]];
        let v = vec![vec![1.0], vec![1.0]];
        let p = SupProblem::new(&class, &xs, &c, &v, SupSettings::default()).unwrap();
        assert!(matches!(p.value(0.4), Err(RiskError::EmptyBall { .. })));
        // f = a constant, ||a - c||_n^2 = (a^2 + (a-1)^2)/2 <= r^2;
        // objective a - 0.5, maximal a = 0.5 + sqrt(r^2 - 0.25).
        let r = 1.0;
        let got = p.value(r).unwrap();
        let expect = (r * r - 0.25_f64).sqrt();
        assert!((got.value - expect).abs() < 1e-12, "{got:?}");
        assert!(got.slack < 1e-9);
    }

    #[test]
    fn bounded_class_is_below_support() {
        let xs = design(6);
        let class = FunctionClass::Linear(
            LinearFeatureClass::new(FeatureMap::Affine, 1).with_bound(0.5),
        );
        let c = vec![vec![0.0]; 6];
        let v: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 - 2.0]).collect();
        let p = SupProblem::new(&class, &xs, &c, &v, SupSettings::default()).unwrap();
        let big = p.value(100.0).unwrap();
        // With a huge ball only the coefficient bound binds:
        // sup over ||theta|| <= 0.5 of <G_theta, theta> = 0.5 ||G_theta||.
        let g0 = v.iter().map(|r| r[0]).sum::<f64>() / 6.0;
        let g1 = v.iter().zip(&xs).map(|(r, x)| r[0] * x[0]).sum::<f64>() / 6.0;
        let expect = 0.5 * (g0 * g0 + g1 * g1).sqrt();
        assert!((big.value - expect).abs() < 1e-8, "{big:?} vs {expect}");
        let small = p.value(0.01).unwrap();
        let unbounded = SupProblem::new(
            &FunctionClass::Linear(LinearFeatureClass::new(FeatureMap::Affine, 1)),
            &xs,
            &c,
            &v,
            SupSettings::default(),
        )
        .unwrap()
        .value(0.01)
        .unwrap();
        assert!((small.value - unbounded.value).abs() < 1e-10);
    }
}
