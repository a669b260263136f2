//! Convex losses `l(z, y)` that are smooth and strongly convex in the
//! prediction `z`, with a gradient that is monotone decreasing in `y`.
//!
//! A [`LossSpec`] wraps a [`ConvexLoss`] implementation together with the
//! smoothness constant `beta` and strong-convexity constant `mu` that the bound
//! formulas consume. Constants are supplied, not estimated; use
//! [`check_assumption1`] to falsify them on sampled points.
//!
//! All bound formulas use `alpha := mu`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vecops::{dot, norm, norm_sq, sub};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("dimension mismatch: z has {z}, y has {y}, loss expects {expected:?}")]
    DimensionMismatch {
        z: usize,
        y: usize,
        expected: Option<usize>,
    },
    #[error("loss `{name}` produced a non-finite value")]
    NonFinite { name: String },
    #[error("invalid loss parameters: {0}")]
    InvalidParameters(String),
    #[error("unknown loss `{0}` (expected squared, expfam or quadform)")]
    UnknownLoss(String),
    #[error("unknown log-partition function `{0}` (expected gaussian or softplus-sum)")]
    UnknownLogPartition(String),
}

/// A loss `l: R^d x R^d -> [0, inf)` with gradient in its first argument.
pub trait ConvexLoss: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// Fixed outcome dimension, if the loss carries one (e.g. a matrix parameter).
    fn dim(&self) -> Option<usize> {
        None
    }

    fn value(&self, z: &[f64], y: &[f64]) -> f64;

    fn grad1(&self, z: &[f64], y: &[f64]) -> Vec<f64>;

    /// Smoothness constant of `l(., y)`.
    fn beta(&self) -> f64;

    /// Strong-convexity constant of `l(., y)`.
    fn mu(&self) -> f64;

    /// Solves `grad1(z, y) = g_target` for `y` in closed form, when possible.
    fn inverse_in_y(&self, _z: &[f64], _g_target: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn strictly_monotone_in_y(&self) -> bool {
        true
    }
}

/// A loss together with the regularity constants used by the bounds.
#[derive(Clone)]
pub struct LossSpec {
    loss: Arc<dyn ConvexLoss>,
    beta: f64,
    mu: f64,
    closed_form: bool,
}

impl fmt::Debug for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LossSpec")
            .field("loss", &self.loss)
            .field("beta", &self.beta)
            .field("mu", &self.mu)
            .field("closed_form", &self.closed_form)
            .finish()
    }
}

impl LossSpec {
    pub fn new(loss: impl ConvexLoss + 'static) -> Self {
        Self::from_arc(Arc::new(loss))
    }

    pub fn from_arc(loss: Arc<dyn ConvexLoss>) -> Self {
        let (beta, mu) = (loss.beta(), loss.mu());
        Self {
            loss,
            beta,
            mu,
            closed_form: true,
        }
    }

    pub fn squared() -> Self {
        Self::new(SquaredLoss)
    }

    /// Overrides the stated constants. The loss itself is unchanged, so this
    /// is how negative controls (understated `beta`, etc.) are built.
    pub fn with_constants(mut self, beta: f64, mu: f64) -> Self {
        self.beta = beta;
        self.mu = mu;
        self
    }

    /// Hides the closed-form inverse so wild responses go through the
    /// numerical solvers.
    pub fn without_closed_form(mut self) -> Self {
        self.closed_form = false;
        self
    }

    pub fn name(&self) -> &str {
        self.loss.name()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// The strong-convexity constant as it enters the bounds (`alpha = mu`).
    pub fn alpha(&self) -> f64 {
        self.mu
    }

    pub fn dim(&self) -> Option<usize> {
        self.loss.dim()
    }

    pub fn strictly_monotone_in_y(&self) -> bool {
        self.loss.strictly_monotone_in_y()
    }

    pub fn has_closed_form(&self) -> bool {
        if !self.closed_form {
            return false;
        }
        let d = self.loss.dim().unwrap_or(1);
        let zero = vec![0.0; d];
        self.loss.inverse_in_y(&zero, &zero).is_some()
    }

    pub fn check_dims(&self, z: &[f64], y: &[f64]) -> Result<(), LossError> {
        let expected = self.loss.dim();
        let ok = z.len() == y.len() && !z.is_empty() && expected.is_none_or(|d| d == z.len());
        if ok {
            Ok(())
        } else {
            Err(LossError::DimensionMismatch {
                z: z.len(),
                y: y.len(),
                expected,
            })
        }
    }

    /// `l(z, y)`.
    pub fn value(&self, z: &[f64], y: &[f64]) -> Result<f64, LossError> {
        self.check_dims(z, y)?;
        let v = self.loss.value(z, y);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(LossError::NonFinite {
                name: self.name().to_string(),
            })
        }
    }

    /// `grad_1 l(z, y)`.
    pub fn grad1(&self, z: &[f64], y: &[f64]) -> Result<Vec<f64>, LossError> {
        self.check_dims(z, y)?;
        let g = self.loss.grad1(z, y);
        if g.iter().all(|v| v.is_finite()) {
            Ok(g)
        } else {
            Err(LossError::NonFinite {
                name: self.name().to_string(),
            })
        }
    }

    /// Closed-form solution of `grad1(z, y) = g_target`, unless disabled.
    pub fn inverse_in_y(&self, z: &[f64], g_target: &[f64]) -> Option<Vec<f64>> {
        if self.closed_form {
            self.loss.inverse_in_y(z, g_target)
        } else {
            None
        }
    }

    pub(crate) fn value_raw(&self, z: &[f64], y: &[f64]) -> f64 {
        self.loss.value(z, y)
    }

    pub(crate) fn grad1_raw(&self, z: &[f64], y: &[f64]) -> Vec<f64> {
        self.loss.grad1(z, y)
    }
}

/// `l(u, y) = ||u - y||^2`, with `beta = mu = 2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredLoss;

impl ConvexLoss for SquaredLoss {
    fn name(&self) -> &str {
        "squared"
    }

    fn value(&self, z: &[f64], y: &[f64]) -> f64 {
        z.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    fn grad1(&self, z: &[f64], y: &[f64]) -> Vec<f64> {
        z.iter().zip(y).map(|(a, b)| 2.0 * (a - b)).collect()
    }

    fn beta(&self) -> f64 {
        2.0
    }

    fn mu(&self) -> f64 {
        2.0
    }

    fn inverse_in_y(&self, z: &[f64], g_target: &[f64]) -> Option<Vec<f64>> {
        Some(z.iter().zip(g_target).map(|(a, g)| a - g / 2.0).collect())
    }
}

/// Named convex log-partition functions for [`RegularizedExpFamilyLoss`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogPartition {
    /// `A(z) = ||z||^2 / 2`
    Gaussian,
    /// `A(z) = sum_j log(1 + e^{z_j})`
    SoftplusSum,
}

impl LogPartition {
    pub fn from_name(name: &str) -> Result<Self, LossError> {
        match name {
            "gaussian" => Ok(Self::Gaussian),
            "softplus-sum" => Ok(Self::SoftplusSum),
            other => Err(LossError::UnknownLogPartition(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::SoftplusSum => "softplus-sum",
        }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        match self {
            Self::Gaussian => 0.5 * norm_sq(z),
            Self::SoftplusSum => z.iter().map(|&v| softplus(v)).sum(),
        }
    }

    pub fn grad(&self, z: &[f64]) -> Vec<f64> {
        match self {
            Self::Gaussian => z.to_vec(),
            Self::SoftplusSum => z.iter().map(|&v| sigmoid(v)).collect(),
        }
    }

    /// Lower and upper bounds on the Hessian eigenvalues of `A`.
    pub fn curvature_bounds(&self) -> (f64, f64) {
        match self {
            Self::Gaussian => (1.0, 1.0),
            Self::SoftplusSum => (0.0, 0.25),
        }
    }

    /// `min_z A(z) - z*y + (mu/2) z^2` for one coordinate (both families are separable).
    fn coordinate_floor(&self, y: f64, mu: f64) -> f64 {
        match self {
            Self::Gaussian => -y * y / (2.0 * (1.0 + mu)),
            Self::SoftplusSum => {
                // h'(z) = sigmoid(z) - y + mu z is increasing; root lies in [(y-1)/mu, y/mu].
                let h = |z: f64| softplus(z) - z * y + 0.5 * mu * z * z;
                let dh = |z: f64| sigmoid(z) - y + mu * z;
                let (mut lo, mut hi) = ((y - 1.0) / mu, y / mu);
                let mut z = 0.5 * (lo + hi);
                for _ in 0..100 {
                    let g = dh(z);
                    // Stop before stepping: an exact root would otherwise be
                    // replaced by the bisection fallback.
                    if g.abs() < 1e-15 {
                        break;
                    }
                    if g > 0.0 {
                        hi = z;
                    } else {
                        lo = z;
                    }
                    if (hi - lo) < 1e-15 * (1.0 + z.abs()) {
                        break;
                    }
                    let s = sigmoid(z);
                    let step = z - g / (s * (1.0 - s) + mu);
                    z = if step > lo && step < hi {
                        step
                    } else {
                        0.5 * (lo + hi)
                    };
                }
                h(z)
            }
        }
    }
}

fn softplus(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Ridge-regularized exponential-family negative log-likelihood
/// `A(z) - z'y + (mu/2)||z||^2`, shifted by a `y`-only constant so the value is
/// nonnegative. The shift leaves gradients and every same-`y` difference intact.
#[derive(Debug, Clone, Copy)]
pub struct RegularizedExpFamilyLoss {
    log_partition: LogPartition,
    mu_reg: f64,
}

impl RegularizedExpFamilyLoss {
    pub fn new(log_partition: LogPartition, mu_reg: f64) -> Result<Self, LossError> {
        if !(mu_reg > 0.0 && mu_reg.is_finite()) {
            return Err(LossError::InvalidParameters(format!(
                "ridge weight must be positive, got {mu_reg}"
            )));
        }
        Ok(Self {
            log_partition,
            mu_reg,
        })
    }

    pub fn log_partition(&self) -> LogPartition {
        self.log_partition
    }

    pub fn mu_reg(&self) -> f64 {
        self.mu_reg
    }

    /// The unshifted objective `A(z) - z'y + (mu/2)||z||^2`.
    pub fn raw_value(&self, z: &[f64], y: &[f64]) -> f64 {
        self.log_partition.value(z) - dot(z, y) + 0.5 * self.mu_reg * norm_sq(z)
    }
}

impl ConvexLoss for RegularizedExpFamilyLoss {
    fn name(&self) -> &str {
        "expfam"
    }

    fn value(&self, z: &[f64], y: &[f64]) -> f64 {
        let floor: f64 = y
            .iter()
            .map(|&yj| self.log_partition.coordinate_floor(yj, self.mu_reg))
            .sum();
        (self.raw_value(z, y) - floor).max(0.0)
    }

    fn grad1(&self, z: &[f64], y: &[f64]) -> Vec<f64> {
        let ga = self.log_partition.grad(z);
        ga.iter()
            .zip(z)
            .zip(y)
            .map(|((a, zj), yj)| a - yj + self.mu_reg * zj)
            .collect()
    }

    fn beta(&self) -> f64 {
        self.log_partition.curvature_bounds().1 + self.mu_reg
    }

    fn mu(&self) -> f64 {
        self.log_partition.curvature_bounds().0 + self.mu_reg
    }

    fn inverse_in_y(&self, z: &[f64], g_target: &[f64]) -> Option<Vec<f64>> {
        let ga = self.log_partition.grad(z);
        Some(
            ga.iter()
                .zip(z)
                .zip(g_target)
                .map(|((a, zj), g)| a + self.mu_reg * zj - g)
                .collect(),
        )
    }
}

/// `l(x, y) = (x - y)' A (x - y) + b'(x - y)`, shifted by the constant
/// `b' A^{-1} b / 4` so the minimum value is zero.
#[derive(Debug, Clone)]
pub struct QuadraticFormLoss {
    a: DMatrix<f64>,
    b: DVector<f64>,
    a_inv: Option<DMatrix<f64>>,
    offset: f64,
    beta: f64,
    mu: f64,
    positive_definite: bool,
}

/// Stated `mu` when the matrix is not positive definite. The checker then
/// reports the strong-convexity violation instead of construction failing.
const NON_PD_MU_FLOOR: f64 = 1e-12;

impl QuadraticFormLoss {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, LossError> {
        let d = a.nrows();
        if d == 0 || a.ncols() != d || b.len() != d {
            return Err(LossError::InvalidParameters(format!(
                "A must be square and match b: A is {}x{}, b has {}",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(LossError::InvalidParameters("non-finite entries".into()));
        }
        let asym = (&a - a.transpose()).abs().max();
        if asym > 1e-12 * (1.0 + a.abs().max()) {
            return Err(LossError::InvalidParameters(format!(
                "A must be symmetric (max asymmetry {asym:e})"
            )));
        }
        let eig = SymmetricEigen::new(a.clone());
        let lmin = eig.eigenvalues.min();
        let lmax = eig.eigenvalues.max();
        let positive_definite = lmin > 0.0;
        let a_inv = if positive_definite {
            a.clone().cholesky().map(|c| c.inverse())
        } else {
            None
        };
        let offset = a_inv
            .as_ref()
            .map(|inv| 0.25 * b.dot(&(inv * &b)))
            .unwrap_or(0.0);
        let mu = if positive_definite {
            2.0 * lmin
        } else {
            NON_PD_MU_FLOOR
        };
        let beta = (2.0 * lmax).max(mu);
        Ok(Self {
            a,
            b,
            a_inv,
            offset,
            beta,
            mu,
            positive_definite,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self::new(DMatrix::identity(d, d), DVector::zeros(d)).expect("identity is valid")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn shift(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn is_positive_definite(&self) -> bool {
        self.positive_definite
    }
}

impl ConvexLoss for QuadraticFormLoss {
    fn name(&self) -> &str {
        "quadform"
    }

    fn dim(&self) -> Option<usize> {
        Some(self.a.nrows())
    }

    fn value(&self, z: &[f64], y: &[f64]) -> f64 {
        let u = DVector::from_vec(sub(z, y));
        (u.dot(&(&self.a * &u)) + self.b.dot(&u) + self.offset).max(0.0)
    }

    fn grad1(&self, z: &[f64], y: &[f64]) -> Vec<f64> {
        let u = DVector::from_vec(sub(z, y));
        (2.0 * (&self.a * u) + &self.b).as_slice().to_vec()
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    fn inverse_in_y(&self, z: &[f64], g_target: &[f64]) -> Option<Vec<f64>> {
        let inv = self.a_inv.as_ref()?;
        if z.len() != self.b.len() {
            return None;
        }
        let g = DVector::from_column_slice(g_target);
        let shift = 0.5 * (inv * (g - &self.b));
        Some(z.iter().zip(shift.iter()).map(|(x, s)| x - s).collect())
    }

    fn strictly_monotone_in_y(&self) -> bool {
        self.positive_definite
    }
}

/// Worst-case violations of the loss regularity clauses found on sampled points.
///
/// Smoothness and strong-convexity violations are normalized by
/// `1 + |l(z1,y)| + |l(z2,y)|`; monotonicity by `1 + ||y1 - y2||^2`;
/// coercivity by `1 + |q|` along the radius ladder. A clause passes when its
/// violation is at most [`CheckReport::tolerance`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckReport {
    pub loss: String,
    pub beta: f64,
    pub mu: f64,
    pub trials: usize,
    pub tolerance: f64,
    pub smoothness_violation: f64,
    pub convexity_violation: f64,
    pub monotonicity_violation: f64,
    /// Largest normalized `<grad1(z,y1) - grad1(z,y2), y1 - y2>` seen (should be `<= 0`).
    pub max_monotonicity_inner: f64,
    pub coercivity_violation: f64,
    pub coercivity_radius_cap: f64,
    /// `beta >= mu > 0`
    pub constants_consistent: bool,
    pub passed: bool,
}

impl CheckReport {
    pub fn smoothness_ok(&self) -> bool {
        self.smoothness_violation <= self.tolerance
    }
    pub fn convexity_ok(&self) -> bool {
        self.convexity_violation <= self.tolerance
    }
    pub fn monotonicity_ok(&self) -> bool {
        self.monotonicity_violation <= self.tolerance
    }
    pub fn coercivity_ok(&self) -> bool {
        self.coercivity_violation <= self.tolerance
    }
}

/// One sampled triple `(z, y1, y2)`.
pub type Triple = (Vec<f64>, Vec<f64>, Vec<f64>);

pub const CHECK_TOLERANCE: f64 = 1e-9;
pub const COERCIVITY_RADIUS_CAP: f64 = 1e6;

/// Falsification check of the loss regularity clauses.
///
/// Each sampled triple `(z, y1, y2)` is used as follows: the two-point
/// smoothness and strong-convexity inequalities are tested between `z1 = z`
/// and `z2 = y2` at outcome `y1`; monotonicity between `y1` and `y2` at `z`;
/// coercivity along the unit direction of `y1 - y2` (or the first axis when
/// they coincide), via `q(R) = grad1(z, R u)'u` on the ladder `R = 10^k`,
/// `k = 0..=6`, which must be nonincreasing, drop overall, and be negative at
/// the top rung.
pub fn check_assumption1<F>(spec: &LossSpec, mut sampler: F, trials: usize) -> CheckReport
where
    F: FnMut() -> Triple,
{
    let mut smooth = 0.0_f64;
    let mut convex = 0.0_f64;
    let mut mono = 0.0_f64;
    let mut mono_inner = f64::NEG_INFINITY;
    let mut coerce = 0.0_f64;
    let (beta, mu) = (spec.beta(), spec.mu());

    for _ in 0..trials.max(1) {
        let (z, y1, y2) = sampler();
        if spec.check_dims(&z, &y1).is_err() || spec.check_dims(&z, &y2).is_err() {
            continue;
        }
        // (a), (b): z1 = z, z2 = y2, outcome y1.
        let (z1, z2, y) = (&z, &y2, &y1);
        let l1 = spec.value_raw(z1, y);
        let l2 = spec.value_raw(z2, y);
        let g1 = spec.grad1_raw(z1, y);
        let delta = sub(z2, z1);
        let lin = l1 + dot(&g1, &delta);
        let dsq = norm_sq(&delta);
        let scale = 1.0 + l1.abs() + l2.abs();
        smooth = smooth.max((l2 - (lin + 0.5 * beta * dsq)) / scale);
        convex = convex.max(((lin + 0.5 * mu * dsq) - l2) / scale);

        // (c)
        let ga = spec.grad1_raw(&z, &y1);
        let gb = spec.grad1_raw(&z, &y2);
        let dy = sub(&y1, &y2);
        let inner = dot(&sub(&ga, &gb), &dy) / (1.0 + norm_sq(&dy));
        mono_inner = mono_inner.max(inner);
        mono = mono.max(inner);

        // (d)
        let dn = norm(&dy);
        let u: Vec<f64> = if dn > 0.0 {
            dy.iter().map(|v| v / dn).collect()
        } else {
            let mut e = vec![0.0; z.len()];
            e[0] = 1.0;
            e
        };
        let mut first = None;
        let mut prev: Option<f64> = None;
        let mut radius = 1.0;
        while radius <= COERCIVITY_RADIUS_CAP * (1.0 + 1e-12) {
            let yr: Vec<f64> = u.iter().map(|v| v * radius).collect();
            let q = dot(&spec.grad1_raw(&z, &yr), &u);
            if let Some(p) = prev {
                coerce = coerce.max((q - p) / (1.0 + p.abs()));
            }
            first.get_or_insert(q);
            prev = Some(q);
            radius *= 10.0;
        }
        if let (Some(q0), Some(top)) = (first, prev) {
            coerce = coerce.max(top / (1.0 + top.abs()));
            if top >= q0 {
                coerce = coerce.max(1.0);
            }
        }
    }

    let mut report = CheckReport {
        loss: spec.name().to_string(),
        beta,
        mu,
        trials,
        tolerance: CHECK_TOLERANCE,
        smoothness_violation: smooth.max(0.0),
        convexity_violation: convex.max(0.0),
        monotonicity_violation: mono.max(0.0),
        max_monotonicity_inner: mono_inner,
        coercivity_violation: coerce.max(0.0),
        coercivity_radius_cap: COERCIVITY_RADIUS_CAP,
        constants_consistent: beta >= mu && mu > 0.0,
        passed: false,
    };
    report.passed = report.constants_consistent
        && report.smoothness_ok()
        && report.convexity_ok()
        && report.monotonicity_ok()
        && report.coercivity_ok();
    report
}

/// Max over coordinates of `|grad1 - central difference| / (1 + |grad1|)`.
pub fn grad_fd_check(spec: &LossSpec, z: &[f64], y: &[f64], h: f64) -> f64 {
    let h = h.clamp(1e-8, 1e-3);
    let g = spec.grad1_raw(z, y);
    let mut zp = z.to_vec();
    let mut worst = 0.0_f64;
    for j in 0..z.len() {
        let orig = zp[j];
        zp[j] = orig + h;
        let fp = spec.value_raw(&zp, y);
        zp[j] = orig - h;
        let fm = spec.value_raw(&zp, y);
        zp[j] = orig;
        let fd = (fp - fm) / (2.0 * h);
        worst = worst.max((g[j] - fd).abs() / (1.0 + g[j].abs()));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian_sampler(d: usize, scale: f64, seed: u64) -> impl FnMut() -> Triple {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        move || {
            let mut draw = || -> Vec<f64> {
                (0..d)
                    .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            };
            (draw(), draw(), draw())
        }
    }

    fn expfam(lp: LogPartition, mu: f64) -> LossSpec {
        LossSpec::new(RegularizedExpFamilyLoss::new(lp, mu).unwrap())
    }

    #[test]
    fn squared_values() {
        let s = LossSpec::squared();
        assert_eq!(s.value(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(s.value(&[3.0, -2.0], &[3.0, -2.0]).unwrap(), 0.0);
        assert_eq!(s.grad1(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), vec![2.0, 0.0]);
        assert_eq!(s.grad1(&[3.0, -2.0], &[3.0, -2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn quadform_identity_value() {
        let s = LossSpec::new(QuadraticFormLoss::identity(2));
        assert_eq!(s.value(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), 2.0);
    }

    #[test]
    fn expfam_gaussian_gradient() {
        let s = expfam(LogPartition::Gaussian, 1.0);
        assert_eq!(s.grad1(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), vec![2.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let s = LossSpec::squared();
        assert!(matches!(
            s.value(&[1.0], &[1.0, 2.0]),
            Err(LossError::DimensionMismatch { .. })
        ));
        let q = LossSpec::new(QuadraticFormLoss::identity(2));
        assert!(q.grad1(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn built_in_gradients_match_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let b = DVector::from_vec(vec![0.3, -0.7]);
        let quad = QuadraticFormLoss::new(a.clone(), b.clone()).unwrap();
        let sp = RegularizedExpFamilyLoss::new(LogPartition::SoftplusSum, 0.5).unwrap();
        for _ in 0..200 {
            let z: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
            let y: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
            let g = quad.grad1(&z, &y);
            let u = DVector::from_vec(sub(&z, &y));
            let expect = 2.0 * (&a * u) + &b;
            for j in 0..2 {
                assert!((g[j] - expect[j]).abs() <= 1e-12);
            }
            let g = sp.grad1(&z, &y);
            for j in 0..2 {
                let e = 1.0 / (1.0 + (-z[j]).exp()) - y[j] + 0.5 * z[j];
                assert!((g[j] - e).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn squared_two_point_inequalities_are_equalities() {
        let s = LossSpec::squared();
        let (z1, z2, y) = ([0.3, -1.2], [2.0, 0.5], [1.0, 1.0]);
        let l1 = s.value(&z1, &y).unwrap();
        let l2 = s.value(&z2, &y).unwrap();
        let g = s.grad1(&z1, &y).unwrap();
        let d = sub(&z2, &z1);
        let quad = l1 + dot(&g, &d) + 0.5 * 2.0 * norm_sq(&d);
        assert!((quad - l2).abs() < 1e-12);
    }

    #[test]
    fn checker_passes_built_ins() {
        let specs = [
            LossSpec::squared(),
            expfam(LogPartition::Gaussian, 1.0),
            expfam(LogPartition::SoftplusSum, 0.3),
            LossSpec::new(
                QuadraticFormLoss::new(
                    DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.8]),
                    DVector::from_vec(vec![0.1, -0.4]),
                )
                .unwrap(),
            ),
        ];
        for (k, s) in specs.iter().enumerate() {
            let r = check_assumption1(s, gaussian_sampler(2, 2.0, k as u64), 1000);
            assert!(r.passed, "{r:?}");
            assert!(r.max_monotonicity_inner <= 1e-9);
        }
    }

    #[test]
    fn checker_flags_understated_beta() {
        let s = LossSpec::squared().with_constants(0.2, 0.2);
        let r = check_assumption1(&s, gaussian_sampler(2, 1.0, 3), 200);
        assert!(r.smoothness_violation > 0.0);
        assert!(!r.passed);
    }

    #[test]
    fn checker_flags_indefinite_quadform() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        let s = LossSpec::new(QuadraticFormLoss::new(a, DVector::zeros(2)).unwrap());
        let r = check_assumption1(&s, gaussian_sampler(2, 1.0, 5), 200);
        assert!(r.convexity_violation > 0.0);
        assert!(!s.strictly_monotone_in_y());
    }

    #[test]
    fn values_are_nonnegative() {
        let sp = expfam(LogPartition::SoftplusSum, 0.2);
        let ga = expfam(LogPartition::Gaussian, 0.7);
        let q = LossSpec::new(
            QuadraticFormLoss::new(DMatrix::identity(2, 2), DVector::from_vec(vec![1.0, -2.0]))
                .unwrap(),
        );
        let mut next = gaussian_sampler(2, 3.0, 9);
        for _ in 0..500 {
            let (z, y, _) = next();
            for s in [&sp, &ga, &q] {
                assert!(s.value(&z, &y).unwrap() >= 0.0);
            }
        }
        // Minimum is attained at the closed-form stationary point.
        let y = [0.4, -1.3];
        let zstar = q.inverse_in_y(&y, &[0.0, 0.0]);
        assert!(zstar.is_some());
    }

    #[test]
    fn fd_check_small_for_built_ins() {
        let s = LossSpec::squared();
        assert!(grad_fd_check(&s, &[0.5, -2.0], &[1.0, 3.0], 1e-5) <= 1e-7);
        assert!(grad_fd_check(&s, &[0.5, -2.0], &[0.5, -2.0], 1e-5) <= 1e-9);
        let q = LossSpec::new(
            QuadraticFormLoss::new(
                DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
                DVector::from_vec(vec![0.5, 0.1]),
            )
            .unwrap(),
        );
        assert!(grad_fd_check(&q, &[0.5, -2.0], &[1.0, 3.0], 1e-5) <= 1e-6);
    }

    #[test]
    fn asymmetric_quadform_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(QuadraticFormLoss::new(a, DVector::zeros(2)).is_err());
    }

    #[test]
    fn log_partition_registry() {
        assert_eq!(LogPartition::from_name("gaussian").unwrap(), LogPartition::Gaussian);
        assert_eq!(
            LogPartition::from_name("softplus-sum").unwrap(),
            LogPartition::SoftplusSum
        );
        assert!(LogPartition::from_name("poisson").is_err());
    }

    /// Newton can land on the exact root of the floor equation; the floor
    /// must then stay at the minimum so nearby values are not clipped to zero.
    #[test]
    fn softplus_floor_at_exact_newton_root() {
        let loss = RegularizedExpFamilyLoss::new(LogPartition::SoftplusSum, 1.5).unwrap();
        let y = [3.4644121903769376];
        let z = [1.6741822197078284];
        let spec = LossSpec::new(loss);
        assert!(spec.value(&z, &y).unwrap() > 1e-3);
        assert!(grad_fd_check(&spec, &z, &y, 1e-5) <= 1e-6);
    }
}
