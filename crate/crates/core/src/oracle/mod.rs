//! Synthetic ground truth.
//!
//! A scenario fixes the covariates once, knows the true regression function
//! `f*` and draws outcomes so that the gradient noise
//! `w = grad1 l(f*(x), y)` follows a known isotropic law. That makes the
//! centering condition hold by construction and gives exact access to the
//! excess risk, the true and oracle optimisms, the best approximator `f†` in
//! the class, and the conditional noise copies used by the symmetrized
//! processes.
//!
//! The noise scale `sigma` is the scale of the gradient noise `w`, which is
//! the sub-Gaussian parameter the bounds need. For squared loss
//! `w = 2 (f*(x) - y)`, so the outcome noise has standard deviation `sigma / 2`.

mod coverage;
mod scenario;

pub use coverage::{
    coverage_experiment, replicate, run_replication, CoverageReport, CoverageRow,
    CoverageSettings, RepDiagnostics, Replication, SymmetrizationCheck, COVERAGE_ABS_TOL, RECOMMENDED_MIN_REPS,
};
pub use scenario::{
    ClassConfig, ClassKind, DesignConfig, DesignRule, DimsConfig, FStarConfig, FStarKind,
    LossConfig, LossName, ScenarioConfig, SolverConfig, TrainerConfig, TrainerName,
};

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{BaseFit, EngineError, WildRefitOutput};
use crate::losses::{LossError, LossSpec};
use crate::models::{
    empirical_norm_values, mean_inner_values, ConvexErmTrainer, Dataset, FunctionClass, ModelError,
    Predictor, RidgeTrainer, Trainer,
};
use crate::risk::{RiskError, SupProblem, SupSettings};
use crate::vecops::norm;
use crate::wildresp::{solve_wild_response, SolverSettings, WildRespError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("scenario configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("outcome sampling: {0}")]
    Sampling(#[from] WildRespError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Risk(#[from] RiskError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    /// Multivariate Student-t with a shared chi-square mixing variable.
    /// Heavy tailed, so it violates the sub-Gaussian assumption; useful as a
    /// negative control.
    StudentT,
}

/// Law of the gradient noise `w = grad1 l(f*(x), y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub sigma: f64,
    /// Degrees of freedom of the Student-t law.
    pub df: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::gaussian(1.0)
    }
}

impl NoiseModel {
    pub fn gaussian(sigma: f64) -> Self {
        NoiseModel {
            kind: NoiseKind::Gaussian,
            sigma,
            df: 5.0,
        }
    }

    pub fn student_t(sigma: f64, df: f64) -> Self {
        NoiseModel {
            kind: NoiseKind::StudentT,
            sigma,
            df,
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(OracleError::Config(format!(
                "noise sigma must be finite and nonnegative, got {}",
                self.sigma
            )));
        }
        if self.kind == NoiseKind::StudentT && !(self.df > 0.0 && self.df.is_finite()) {
            return Err(OracleError::Config(format!(
                "student-t degrees of freedom must be positive, got {}",
                self.df
            )));
        }
        Ok(())
    }

    /// Directional sub-Gaussian parameter, when the law has one.
    pub fn sub_gaussian_parameter(&self) -> Option<f64> {
        match self.kind {
            NoiseKind::Gaussian => Some(self.sigma),
            NoiseKind::StudentT => (self.sigma == 0.0).then_some(0.0),
        }
    }

    /// One draw of the `d`-dimensional gradient noise.
    pub fn draw<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let scale = match self.kind {
            NoiseKind::Gaussian => self.sigma,
            NoiseKind::StudentT => {
                let chi = ChiSquared::new(self.df)
                    .expect("validated degrees of freedom")
                    .sample(rng);
                self.sigma * (self.df / chi).sqrt()
            }
        };
        z.into_iter().map(|v| scale * v).collect()
    }
}

/// Mixes a base seed and a stream index into an independent-looking seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(base ^ splitmix(stream.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// An outcome `y` with `grad1 l(z_star, y) = w` for a fresh noise draw `w`.
pub fn sample_outcome<R: Rng + ?Sized>(
    spec: &LossSpec,
    z_star: &[f64],
    noise: &NoiseModel,
    rng: &mut R,
    solver: &SolverSettings,
) -> Result<Vec<f64>, OracleError> {
    let w = noise.draw(z_star.len(), rng);
    Ok(solve_wild_response(spec, z_star, &w, z_star, solver)?.y)
}

/// Outcomes for every design point, drawn in order from one seeded stream.
pub fn sample_outcomes(
    spec: &LossSpec,
    f_star_values: &[Vec<f64>],
    noise: &NoiseModel,
    seed: u64,
    solver: &SolverSettings,
) -> Result<Vec<Vec<f64>>, OracleError> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    f_star_values
        .iter()
        .map(|z| sample_outcome(spec, z, noise, &mut rng, solver))
        .collect()
}

/// Mean gradient noise `grad1 l(z_star, y)` over `samples` fresh outcomes at
/// one design point; close to zero under the centering condition.
pub fn gradient_noise_mean(
    spec: &LossSpec,
    z_star: &[f64],
    noise: &NoiseModel,
    samples: usize,
    seed: u64,
    solver: &SolverSettings,
) -> Result<Vec<f64>, OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean = vec![0.0; z_star.len()];
    for _ in 0..samples.max(1) {
        let y = sample_outcome(spec, z_star, noise, &mut rng, solver)?;
        for (m, g) in mean.iter_mut().zip(spec.grad1(z_star, &y)?) {
            *m += g;
        }
    }
    mean.iter_mut().for_each(|m| *m /= samples.max(1) as f64);
    Ok(mean)
}

/// A built scenario: frozen design, known truth and best approximator.
#[derive(Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub spec: LossSpec,
    pub class: FunctionClass,
    pub trainer: Arc<dyn Trainer>,
    pub f_star: Predictor,
    pub f_star_values: Vec<Vec<f64>>,
    pub f_dagger: Predictor,
    pub f_dagger_values: Vec<Vec<f64>>,
    /// Dataset on the frozen design whose outcomes are the noiseless ones
    /// (`grad1 l(f*(x_i), y_i) = 0`); replications swap the outcomes.
    pub design: Dataset,
    pub well_specified: bool,
    pub noise: NoiseModel,
    pub solver: SolverSettings,
}

impl fmt::Debug for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scenario")
            .field("config", &self.config)
            .field("trainer", &self.trainer.name())
            .field("well_specified", &self.well_specified)
            .finish_non_exhaustive()
    }
}

/// Monte Carlo outcome draws per design point when `f†` has no shortcut.
pub const DAGGER_MC_SAMPLES: usize = 1000;

impl Scenario {
    pub fn build(cfg: &ScenarioConfig) -> Result<Self, OracleError> {
        let DimsConfig { n, p, d } = cfg.dims;
        if n == 0 || p == 0 || d == 0 {
            return Err(OracleError::Config(format!(
                "dimensions must be positive (n={n}, p={p}, d={d})"
            )));
        }
        cfg.noise.validate()?;
        let xs = cfg.design.covariates(n, p)?;
        let spec = cfg.loss.build(d)?;
        let class = cfg.class.build(d)?;
        let trainer = cfg.trainer.build(&spec, &class, p, d)?;
        let solver = cfg.solver.settings();
        let (f_star, theta) = cfg.f_star.build(p, d)?;
        let f_star_values = f_star.predict_all(&xs)?;
        let noiseless = sample_outcomes(&spec, &f_star_values, &NoiseModel::gaussian(0.0), 0, &solver)?;
        let design = Dataset::new(xs, noiseless)?;
        class.check_dataset(&design)?;
        let well_specified = cfg.is_well_specified(theta.as_ref());
        let (f_dagger, f_dagger_values) = if well_specified {
            (f_star.clone(), f_star_values.clone())
        } else {
            best_in_class(
                &class,
                &cfg.noise,
                &f_star_values,
                &design,
                &spec,
                DAGGER_MC_SAMPLES,
                derive_seed(cfg.design.seed, 0xDA66E7),
                &solver,
            )?
        };
        Ok(Scenario {
            config: cfg.clone(),
            spec,
            class,
            trainer,
            f_star,
            f_star_values,
            f_dagger,
            f_dagger_values,
            design,
            well_specified,
            noise: cfg.noise,
            solver,
        })
    }

    /// The dataset for one outcome draw.
    pub fn sample(&self, seed: u64) -> Result<Dataset, OracleError> {
        let y = sample_outcomes(&self.spec, &self.f_star_values, &self.noise, seed, &self.solver)?;
        Ok(self.design.with_outcomes(y)?)
    }

    pub fn n(&self) -> usize {
        self.design.n()
    }

    pub fn d(&self) -> usize {
        self.design.d()
    }
}

/// Frozen covariates and one outcome draw, plus `f*`.
pub fn gen_fixed_design(cfg: &ScenarioConfig, seed: u64) -> Result<(Dataset, Predictor), OracleError> {
    let scenario = Scenario::build(cfg)?;
    Ok((scenario.sample(seed)?, scenario.f_star))
}

/// How the excess risk was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthMethod {
    /// `||f_hat - f*||_n^2`, exact for squared loss.
    ClosedForm,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthEstimate {
    pub value: f64,
    pub std_error: f64,
    pub method: TruthMethod,
    pub mc_samples: usize,
}

/// Smallest Monte Carlo size accepted for the excess risk.
pub const MIN_TRUTH_MC_SAMPLES: usize = 1000;

/// Fixed-design excess risk
/// `(1/n) sum_i E[l(f_hat(x_i), y'_i) - l(f*(x_i), y'_i)]` from predictor
/// values. Squared loss uses the closed form unless `force_monte_carlo`.
#[allow(clippy::too_many_arguments)]
pub fn true_excess_risk_values(
    f_hat: &[Vec<f64>],
    f_star: &[Vec<f64>],
    spec: &LossSpec,
    noise: &NoiseModel,
    mc_samples: usize,
    seed: u64,
    solver: &SolverSettings,
    force_monte_carlo: bool,
) -> Result<TruthEstimate, OracleError> {
    if f_hat.len() != f_star.len() || f_hat.is_empty() {
        return Err(OracleError::InvalidInput(format!(
            "{} fitted values against {} true values",
            f_hat.len(),
            f_star.len()
        )));
    }
    if spec.name() == "squared" && !force_monte_carlo {
        let dist = empirical_norm_values(f_hat, f_star)?;
        return Ok(TruthEstimate {
            value: dist * dist,
            std_error: 0.0,
            method: TruthMethod::ClosedForm,
            mc_samples: 0,
        });
    }
    if mc_samples < MIN_TRUTH_MC_SAMPLES {
        return Err(OracleError::InvalidInput(format!(
            "Monte Carlo excess risk needs at least {MIN_TRUTH_MC_SAMPLES} samples, got {mc_samples}"
        )));
    }
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = f_hat.len() as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..mc_samples {
        let mut sample = 0.0;
        for (zh, zs) in f_hat.iter().zip(f_star) {
            let y = sample_outcome(spec, zs, noise, &mut rng, solver)?;
            sample += spec.value(zh, &y)? - spec.value(zs, &y)?;
        }
        sample /= n;
        sum += sample;
        sum_sq += sample * sample;
    }
    let m = mc_samples as f64;
    let mean = sum / m;
    let var = ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0);
    Ok(TruthEstimate {
        value: mean,
        std_error: (var / m).sqrt(),
        method: TruthMethod::MonteCarlo,
        mc_samples,
    })
}

/// Predictor-level wrapper of [`true_excess_risk_values`] on the design of `ds`.
#[allow(clippy::too_many_arguments)]
pub fn true_excess_risk(
    f_hat: &Predictor,
    f_star: &Predictor,
    spec: &LossSpec,
    noise: &NoiseModel,
    ds: &Dataset,
    mc_samples: usize,
    seed: u64,
    solver: &SolverSettings,
) -> Result<TruthEstimate, OracleError> {
    true_excess_risk_values(
        &f_hat.predict_all(ds.x())?,
        &f_star.predict_all(ds.x())?,
        spec,
        noise,
        mc_samples,
        seed,
        solver,
        false,
    )
}

/// `(1/n) sum_i [l(f_hat(x_i), y_i) - l(f*(x_i), y_i)]`.
pub fn empirical_excess_risk_values(
    f_hat: &[Vec<f64>],
    f_star: &[Vec<f64>],
    ds: &Dataset,
    spec: &LossSpec,
) -> Result<f64, OracleError> {
    if f_hat.len() != ds.n() || f_star.len() != ds.n() {
        return Err(OracleError::InvalidInput("value lists must match the dataset".into()));
    }
    let mut total = 0.0;
    for ((zh, zs), y) in f_hat.iter().zip(f_star).zip(ds.y()) {
        total += spec.value(zh, y)? - spec.value(zs, y)?;
    }
    Ok(total / ds.n() as f64)
}

pub fn empirical_excess_risk(
    f_hat: &Predictor,
    f_star: &Predictor,
    ds: &Dataset,
    spec: &LossSpec,
) -> Result<f64, OracleError> {
    empirical_excess_risk_values(
        &f_hat.predict_all(ds.x())?,
        &f_star.predict_all(ds.x())?,
        ds,
        spec,
    )
}

/// Gradient noise `w_i = grad1 l(f*(x_i), y_i)` on the outcomes of `ds`.
pub fn noise_gradients(
    f_star: &[Vec<f64>],
    ds: &Dataset,
    spec: &LossSpec,
) -> Result<Vec<Vec<f64>>, OracleError> {
    f_star
        .iter()
        .zip(ds.y())
        .map(|(z, y)| spec.grad1(z, y).map_err(OracleError::from))
        .collect()
}

/// `Opt* = (1/n) sum_i <w_i, f_hat(x_i) - f*(x_i)>`.
pub fn true_optimism_values(
    f_hat: &[Vec<f64>],
    f_star: &[Vec<f64>],
    ds: &Dataset,
    spec: &LossSpec,
) -> Result<f64, OracleError> {
    let w = noise_gradients(f_star, ds, spec)?;
    Ok(mean_inner_values(&w, f_hat, f_star))
}

/// `Opt† = (1/n) sum_i <w_i, f_hat(x_i) - f†(x_i)>`.
pub fn oracle_optimism_values(
    f_hat: &[Vec<f64>],
    f_dagger: &[Vec<f64>],
    f_star: &[Vec<f64>],
    ds: &Dataset,
    spec: &LossSpec,
) -> Result<f64, OracleError> {
    let w = noise_gradients(f_star, ds, spec)?;
    Ok(mean_inner_values(&w, f_hat, f_dagger))
}

pub fn true_optimism(
    f_hat: &Predictor,
    f_star: &Predictor,
    ds: &Dataset,
    spec: &LossSpec,
) -> Result<f64, OracleError> {
    true_optimism_values(
        &f_hat.predict_all(ds.x())?,
        &f_star.predict_all(ds.x())?,
        ds,
        spec,
    )
}

pub fn oracle_optimism(
    f_hat: &Predictor,
    f_dagger: &Predictor,
    f_star: &Predictor,
    ds: &Dataset,
    spec: &LossSpec,
) -> Result<f64, OracleError> {
    oracle_optimism_values(
        &f_hat.predict_all(ds.x())?,
        &f_dagger.predict_all(ds.x())?,
        &f_star.predict_all(ds.x())?,
        ds,
        spec,
    )
}

/// Residual of the excess-risk decomposition,
/// `(beta/alpha)(E_D - Opt*) - E_fix`.
///
/// Expanding `l(f_hat, y)` around `f*` and bounding the Bregman remainder by
/// the two curvature constants gives `E_fix <= (beta/alpha)(E_D - Opt*)`;
/// for squared loss the two sides coincide, so the residual is zero up to
/// rounding. Nonnegative whenever the decomposition holds.
pub fn decomposition_residual(
    truth: f64,
    empirical_excess: f64,
    true_optimism: f64,
    spec: &LossSpec,
) -> f64 {
    spec.beta() / spec.alpha() * (empirical_excess - true_optimism) - truth
}

/// Best approximator `f†` of `f*` in `class` under the population risk on
/// the design.
///
/// The unconstrained class contains `f*` itself. For squared loss on a
/// linear class, `f†` is the least-squares projection of the `f*` values.
/// Otherwise the population risk is replaced by its Monte Carlo estimate over
/// `mc_samples` outcome draws per design point and minimized by convex ERM.
#[allow(clippy::too_many_arguments)]
pub fn best_in_class(
    class: &FunctionClass,
    noise: &NoiseModel,
    f_star_values: &[Vec<f64>],
    ds: &Dataset,
    spec: &LossSpec,
    mc_samples: usize,
    seed: u64,
    solver: &SolverSettings,
) -> Result<(Predictor, Vec<Vec<f64>>), OracleError> {
    if f_star_values.len() != ds.n() {
        return Err(OracleError::InvalidInput("one f* value per design point required".into()));
    }
    let lin = match class {
        FunctionClass::Unconstrained => {
            let f = Predictor::table(ds.x().to_vec(), f_star_values.to_vec())?;
            return Ok((f, f_star_values.to_vec()));
        }
        FunctionClass::Linear(lin) => lin,
    };
    let fit = if spec.name() == "squared" {
        let target = ds.with_outcomes(f_star_values.to_vec())?;
        if lin.coefficient_bound.is_none() {
            RidgeTrainer::new(0.0, class.clone())?.fit(&target)?
        } else {
            ConvexErmTrainer::new(LossSpec::squared(), class.clone(), 1e-12, 200_000)?.fit(&target)?
        }
    } else {
        noise.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::with_capacity(ds.n() * mc_samples.max(1));
        let mut ys = Vec::with_capacity(xs.capacity());
        for (x, z) in ds.x().iter().zip(f_star_values) {
            for _ in 0..mc_samples.max(1) {
                xs.push(x.clone());
                ys.push(sample_outcome(spec, z, noise, &mut rng, solver)?);
            }
        }
        ConvexErmTrainer::new(spec.clone(), class.clone(), 1e-10, 200_000)?
            .fit(&Dataset::new(xs, ys)?)?
    };
    let values = fit.predictor.predict_all(ds.x())?;
    Ok((fit.predictor, values))
}

/// A noise copy conditionally independent of `w` given its direction:
/// `s * m * w / ||w||` with a uniform sign `s` and `m` the norm of a fresh
/// draw from the noise law (for Gaussian noise a scaled chi variable with
/// `d` degrees of freedom). Returns zero for `w = 0`, where the
/// conditioning is vacuous.
pub fn sample_conditional_copy<R: Rng + ?Sized>(
    noise: &NoiseModel,
    w: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    let len = norm(w);
    if len == 0.0 {
        return vec![0.0; w.len()];
    }
    let m = norm(&noise.draw(w.len(), rng));
    let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    w.iter().map(|v| s * m * v / len).collect()
}

/// The symmetrized processes `(Z_n(r), U_n(r))` of a refitting run.
///
/// With `w~_i = (w_i - w'_i)/2` for conditional copies `w'_i`,
/// `Z_n(r) = sup_{f in B_r(f†)} (1/n) sum_i <eps_i w~_i, f(x_i) - f†(x_i)>`
/// and `U_n(r)` is the same supremum over `B_r(f_hat)` centered at `f_hat`.
#[allow(clippy::too_many_arguments)]
pub fn symmetrized_processes(
    out: &WildRefitOutput,
    f_star_values: &[Vec<f64>],
    f_dagger_values: &[Vec<f64>],
    spec: &LossSpec,
    noise: &NoiseModel,
    class: &FunctionClass,
    r: f64,
    seed: u64,
    settings: SupSettings,
) -> Result<(f64, f64), OracleError> {
    let copies = SymmetrizedProblems::new(
        &out.base,
        &out.eps,
        f_star_values,
        f_dagger_values,
        spec,
        noise,
        class,
        seed,
        settings,
    )?;
    Ok((copies.z.value(r)?.value, copies.u.value(r)?.value))
}

/// The two symmetrized suprema for one draw of signs and noise copies,
/// ready for evaluation at any radius.
#[derive(Debug, Clone)]
pub struct SymmetrizedProblems {
    pub z: SupProblem,
    pub u: SupProblem,
}

impl SymmetrizedProblems {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        base: &BaseFit,
        eps: &[f64],
        f_star_values: &[Vec<f64>],
        f_dagger_values: &[Vec<f64>],
        spec: &LossSpec,
        noise: &NoiseModel,
        class: &FunctionClass,
        seed: u64,
        settings: SupSettings,
    ) -> Result<Self, OracleError> {
        let ds = &base.dataset;
        if eps.len() != ds.n() {
            return Err(OracleError::InvalidInput("one sign per sample required".into()));
        }
        let w = noise_gradients(f_star_values, ds, spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<Vec<f64>> = w
            .iter()
            .zip(eps)
            .map(|(wi, e)| {
                let copy = sample_conditional_copy(noise, wi, &mut rng);
                wi.iter().zip(copy).map(|(a, b)| e * 0.5 * (a - b)).collect()
            })
            .collect();
        Ok(SymmetrizedProblems {
            z: SupProblem::new(class, ds.x(), f_dagger_values, &v, settings)?,
            u: SupProblem::new(class, ds.x(), &base.fitted, &v, settings)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_gives_noiseless_outcomes() {
        let cfg = ScenarioConfig {
            noise: NoiseModel::gaussian(0.0),
            ..ScenarioConfig::default()
        };
        let scn = Scenario::build(&cfg).unwrap();
        let ds = scn.sample(5).unwrap();
        for (z, y) in scn.f_star_values.iter().zip(ds.y()) {
            assert!(scn.spec.grad1(z, y).unwrap().iter().all(|g| *g == 0.0));
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let scn = Scenario::build(&ScenarioConfig::default()).unwrap();
        assert_eq!(scn.sample(9).unwrap().y(), scn.sample(9).unwrap().y());
        assert_ne!(scn.sample(9).unwrap().y(), scn.sample(10).unwrap().y());
    }

    #[test]
    fn squared_truth_closed_form_example() {
        let spec = LossSpec::squared();
        let t = true_excess_risk_values(
            &[vec![1.0], vec![1.0]],
            &[vec![0.0], vec![0.0]],
            &spec,
            &NoiseModel::gaussian(1.0),
            0,
            0,
            &SolverSettings::default(),
            false,
        )
        .unwrap();
        assert_eq!((t.value, t.std_error), (1.0, 0.0));
    }

    #[test]
    fn interpolation_vs_offset() {
        let ds = Dataset::new(vec![vec![0.0]], vec![vec![3.0]]).unwrap();
        let e = empirical_excess_risk_values(&[vec![3.0]], &[vec![4.0]], &ds, &LossSpec::squared())
            .unwrap();
        assert_eq!(e, -1.0);
    }

    #[test]
    fn intercept_projection() {
        use crate::models::{FeatureMap, LinearFeatureClass};
        let ds = Dataset::new(vec![vec![0.0], vec![1.0]], vec![vec![0.0], vec![1.0]]).unwrap();
        let class = FunctionClass::Linear(LinearFeatureClass::new(FeatureMap::Intercept, 1));
        let (_, vals) = best_in_class(
            &class,
            &NoiseModel::gaussian(1.0),
            &[vec![0.0], vec![1.0]],
            &ds,
            &LossSpec::squared(),
            10,
            0,
            &SolverSettings::default(),
        )
        .unwrap();
        assert!(vals.iter().all(|v| (v[0] - 0.5).abs() < 1e-12));
    }

    #[test]
    fn conditional_copy_is_collinear() {
        let noise = NoiseModel::gaussian(1.3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_conditional_copy(&noise, &[0.0, 0.0], &mut rng), vec![0.0, 0.0]);
        let w = [0.3, -1.2, 0.5];
        for _ in 0..200 {
            let c = sample_conditional_copy(&noise, &w, &mut rng);
            let e: Vec<f64> = w.iter().map(|v| v / norm(&w)).collect();
            let inner: f64 = c.iter().zip(&e).map(|(a, b)| a * b).sum();
            assert!((inner.abs() - norm(&c)).abs() < 1e-12);
        }
    }

    #[test]
    fn derive_seed_spreads() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(3, 4), derive_seed(3, 4));
    }
}
