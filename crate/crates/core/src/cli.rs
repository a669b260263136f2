//! Command front end: run configuration, the five subcommands and their
//! report bundles.
//!
//! ```text
//! riskwild check-loss --config run.toml
//! riskwild audit      --config run.toml --mode oracle --out bundle/
//! riskwild tune-rho   --config run.toml --seed 7
//! riskwild radius     --config run.toml
//! riskwild coverage   --config run.toml --out coverage/
//! ```
//!
//! The configuration is TOML. Every section is optional and unknown keys are
//! rejected. Without a `[dataset]` section the run uses a synthetic scenario
//! described by `[dims]`, `[design]`, `[f_star]`, `[noise]`, `[loss]`,
//! `[trainer]`, `[class]` and `[solver]`; with one, the outcomes come from a
//! file and only observable mode is available.
//!
//! Seed precedence: `--seed`, then `seed` in the file, then `RISKWILD_SEED`,
//! then 0. Exit codes: 0 success, 1 assertion or coverage failure (and
//! pipeline failures), 2 configuration error.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{rademacher, BaseFit};
use crate::io::{self, DatasetFormat, IoError};
use crate::losses::{check_assumption1, grad_fd_check, CheckReport, LossSpec};
use crate::models::{rms, Dataset, FunctionClass, Trainer};
use crate::oracle::{
    coverage_experiment, derive_seed, replicate, ClassConfig, CoverageSettings, DesignConfig,
    DimsConfig, FStarConfig, LossConfig, NoiseModel, OracleError, RepDiagnostics, Scenario,
    ScenarioConfig, SolverConfig, TrainerConfig, TruthEstimate,
};
use crate::risk::{
    confidence_theorem2, excess_risk_bound, fixed_point_radius, pilot_errors, processes,
    radius_bound_corollary, radius_bound_theorem2, run_audit, tune_rho_for_radius, AuditCore,
    AuditSettings, BoundInputs, BoundMode, BoundReport, CorollaryBound, FixedPoint,
    OptimismVariant, ProcessBoundCheck, RadiusComponents, RadiusReport, RhoPolicy, RiskError,
    ScanPhase, SupSettings, TuneSettings, TuneSummary,
};
use crate::wildresp::Side;

pub const SEED_ENV: &str = "RISKWILD_SEED";
pub const DEFAULT_OUT: &str = "riskwild-out";

#[derive(Debug, Parser)]
#[command(name = "riskwild", version, about = "Excess-risk certificates by doubly wild refitting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the file and the RISKWILD_SEED variable.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for the report bundle.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Falsification check of the loss regularity conditions.
    CheckLoss,
    /// Refit, tune, and assemble the excess-risk bound.
    Audit,
    /// Tune both noise scales to a target refit radius.
    TuneRho,
    /// Fixed-point and slope-based bounds on the estimation radius.
    Radius,
    /// Repeated-draw coverage experiment on a synthetic scenario.
    Coverage,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::CheckLoss => "check-loss",
            Command::Audit => "audit",
            Command::TuneRho => "tune-rho",
            Command::Radius => "radius",
            Command::Coverage => "coverage",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Only quantities computable without the true regression function.
    Observable,
    /// Everything, including pilot errors, bias and the true excess risk.
    Oracle,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{stage} failed: {message}")]
    Runtime { stage: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime { .. } => 1,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Runtime {
            stage: "write",
            message: e.to_string(),
        }
    }
}

/// Configuration problems raised while building the problem map to exit 2,
/// everything else to 1.
fn oracle_err(stage: &'static str) -> impl FnOnce(OracleError) -> CliError {
    move |e| match e {
        OracleError::Config(m) => CliError::Config(m),
        OracleError::InvalidInput(m) if stage == "setup" => CliError::Config(m),
        OracleError::Loss(e) if stage == "setup" => CliError::Config(e.to_string()),
        OracleError::Model(e) if stage == "setup" => CliError::Config(e.to_string()),
        e => CliError::Runtime {
            stage,
            message: e.to_string(),
        },
    }
}

fn risk_err(stage: &'static str) -> impl FnOnce(RiskError) -> CliError {
    move |e| match e {
        RiskError::InvalidInput(m) => CliError::Config(m),
        e => CliError::Runtime {
            stage,
            message: e.to_string(),
        },
    }
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Relative paths are resolved against the configuration file.
    pub path: PathBuf,
    #[serde(default)]
    pub format: DatasetFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub reps: usize,
    /// Confidence parameter of both bounds.
    pub t: f64,
    pub mc_samples: usize,
    pub rho: RhoPolicy,
    pub r_max: f64,
    pub fixed_point_tol: f64,
    pub optimism: OptimismVariant,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let cov = CoverageSettings::default();
        ExperimentConfig {
            reps: cov.reps,
            t: cov.t,
            mc_samples: cov.mc_samples,
            rho: RhoPolicy::FixedPoint,
            r_max: cov.audit.r_max,
            fixed_point_tol: cov.audit.fixed_point_tol,
            optimism: OptimismVariant::ProofConsistent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneConfig {
    /// Target refit radius for `tune-rho`; twice the fixed point when absent.
    pub target: Option<f64>,
    pub bracket_low: f64,
    pub bracket_high: f64,
    pub tol: f64,
    pub max_evals: usize,
    pub grid_points: usize,
}

impl Default for TuneConfig {
    fn default() -> Self {
        let t = TuneSettings::default();
        TuneConfig {
            target: None,
            bracket_low: t.bracket.0,
            bracket_high: t.bracket.1,
            tol: t.tol,
            max_evals: t.max_evals,
            grid_points: t.grid_points,
        }
    }
}

impl TuneConfig {
    fn settings(&self) -> TuneSettings {
        TuneSettings {
            bracket: (self.bracket_low, self.bracket_high),
            tol: self.tol,
            max_evals: self.max_evals,
            grid_points: self.grid_points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupConfig {
    pub iterations: usize,
    pub restarts: usize,
    /// Cross-check closed-form suprema with projected ascent.
    pub certify: bool,
}

impl Default for SupConfig {
    fn default() -> Self {
        let s = SupSettings::default();
        SupConfig {
            iterations: s.iterations,
            restarts: s.restarts,
            certify: s.certify,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub trials: usize,
    /// Standard deviation of the sampled prediction and outcome coordinates.
    pub scale: f64,
    pub fd_step: f64,
    pub fd_tol: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            trials: 1000,
            scale: 3.0,
            fd_step: 1e-5,
            fd_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub out: Option<PathBuf>,
    pub dataset: Option<DatasetConfig>,
    pub dims: DimsConfig,
    pub design: DesignConfig,
    pub f_star: FStarConfig,
    pub noise: NoiseModel,
    pub loss: LossConfig,
    pub trainer: TrainerConfig,
    pub class: ClassConfig,
    pub solver: SolverConfig,
    pub experiment: ExperimentConfig,
    pub tune: TuneConfig,
    pub sup: SupConfig,
    pub check: CheckConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            dims: self.dims.clone(),
            design: self.design.clone(),
            f_star: self.f_star.clone(),
            noise: self.noise,
            loss: self.loss.clone(),
            trainer: self.trainer.clone(),
            class: self.class.clone(),
            solver: self.solver.clone(),
        }
    }

    fn audit_settings(&self, sup_seed: u64) -> AuditSettings {
        AuditSettings {
            r_max: self.experiment.r_max,
            fixed_point_tol: self.experiment.fixed_point_tol,
            rho: self.experiment.rho,
            tune: self.tune.settings(),
            sup: SupSettings {
                iterations: self.sup.iterations,
                restarts: self.sup.restarts,
                seed: sup_seed,
                certify: self.sup.certify,
            },
            solver: self.solver.settings(),
            variant: self.experiment.optimism,
        }
    }

    fn coverage_settings(&self, seed: u64) -> CoverageSettings {
        CoverageSettings {
            reps: self.experiment.reps,
            t: self.experiment.t,
            seed,
            mc_samples: self.experiment.mc_samples,
            audit: self.audit_settings(0),
        }
    }
}

/// Where the seed came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedSource {
    Flag,
    Config,
    Env,
    Default,
}

/// Resolved settings of one invocation.
#[derive(Debug, Clone)]
pub struct Context {
    pub command: Command,
    pub config: RunConfig,
    pub config_dir: PathBuf,
    pub seed: u64,
    pub seed_source: SeedSource,
    pub mode: Mode,
    pub out: PathBuf,
}

impl Context {
    /// Applies the precedence rules; `env_seed` is the raw `RISKWILD_SEED`.
    pub fn resolve(cli: &Cli, env_seed: Option<String>) -> Result<Self, CliError> {
        let (config, config_dir) = match &cli.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
                (RunConfig::from_toml(&text)?, dir)
            }
            None => (RunConfig::default(), PathBuf::new()),
        };
        let env_seed = match env_seed {
            Some(raw) => Some(raw.trim().parse::<u64>().map_err(|_| {
                CliError::Config(format!("{SEED_ENV}=`{raw}` is not an unsigned integer"))
            })?),
            None => None,
        };
        let (seed, seed_source) = match (cli.seed, config.seed, env_seed) {
            (Some(s), _, _) => (s, SeedSource::Flag),
            (None, Some(s), _) => (s, SeedSource::Config),
            (None, None, Some(s)) => (s, SeedSource::Env),
            (None, None, None) => (0, SeedSource::Default),
        };
        let has_file = config.dataset.is_some();
        let mode = cli
            .mode
            .or(config.mode)
            .unwrap_or(if has_file { Mode::Observable } else { Mode::Oracle });
        if mode == Mode::Oracle && has_file {
            return Err(CliError::Config(
                "oracle mode needs a synthetic scenario; a dataset file has no known truth".into(),
            ));
        }
        if cli.command == Command::Coverage && has_file {
            return Err(CliError::Config("coverage runs on synthetic scenarios only".into()));
        }
        let out = cli
            .out
            .clone()
            .or_else(|| config.out.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        Ok(Context {
            command: cli.command,
            config,
            config_dir,
            seed,
            seed_source,
            mode,
            out,
        })
    }

    /// Seed of the single replication used by `audit`, `tune-rho` and `radius`.
    fn rep_seed(&self) -> u64 {
        derive_seed(self.seed, 0)
    }
}

/// Data, loss, class and trainer for the single-dataset commands.
struct Problem {
    ds: Dataset,
    spec: LossSpec,
    class: FunctionClass,
    trainer: Arc<dyn Trainer>,
    eps: Vec<f64>,
    sigma: f64,
    scenario: Option<Scenario>,
}

impl Problem {
    fn build(ctx: &Context) -> Result<Self, CliError> {
        let cfg = &ctx.config;
        let seed = ctx.rep_seed();
        match &cfg.dataset {
            Some(file) => {
                let path = if file.path.is_relative() {
                    ctx.config_dir.join(&file.path)
                } else {
                    file.path.clone()
                };
                let ds = io::load_dataset(&path, file.format)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                cfg.noise.validate().map_err(oracle_err("setup"))?;
                let spec = cfg.loss.build(ds.d()).map_err(oracle_err("setup"))?;
                let class = cfg.class.build(ds.d()).map_err(oracle_err("setup"))?;
                let trainer = cfg
                    .trainer
                    .build(&spec, &class, ds.p(), ds.d())
                    .map_err(oracle_err("setup"))?;
                let eps = rademacher(ds.n(), derive_seed(seed, 2));
                Ok(Problem {
                    ds,
                    spec,
                    class,
                    trainer,
                    eps,
                    sigma: cfg.noise.sigma,
                    scenario: None,
                })
            }
            None => {
                let scn = Scenario::build(&cfg.scenario()).map_err(oracle_err("setup"))?;
                let ds = scn.sample(derive_seed(seed, 1)).map_err(oracle_err("sample"))?;
                let eps = rademacher(ds.n(), derive_seed(seed, 2));
                Ok(Problem {
                    ds,
                    spec: scn.spec.clone(),
                    class: scn.class.clone(),
                    trainer: scn.trainer.clone(),
                    eps,
                    sigma: scn.noise.sigma,
                    scenario: Some(scn),
                })
            }
        }
    }
}

/// Result of one command.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(&cli, std::env::var(SEED_ENV).ok()) {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("riskwild: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli, env_seed: Option<String>) -> Result<Outcome, CliError> {
    let ctx = Context::resolve(cli, env_seed)?;
    println!(
        "riskwild {} (seed {} from {:?}, mode {:?})",
        ctx.command.name(),
        ctx.seed,
        ctx.seed_source,
        ctx.mode
    );
    let outcome = match ctx.command {
        Command::CheckLoss => check_loss(&ctx),
        Command::Audit => audit(&ctx),
        Command::TuneRho => tune_rho(&ctx),
        Command::Radius => radius(&ctx),
        Command::Coverage => coverage(&ctx),
    }?;
    for f in &outcome.files {
        println!("  wrote {}", f.display());
    }
    println!("{}", if outcome.passed { "PASS" } else { "FAIL" });
    Ok(outcome)
}

fn status(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

// ---------------------------------------------------------------------------
// check-loss

#[derive(Debug, Clone, Serialize)]
pub struct CheckLossFile {
    pub seed: u64,
    pub d: usize,
    pub loss: LossConfig,
    pub report: CheckReport,
    pub fd_points: usize,
    pub fd_max_error: f64,
    pub fd_tol: f64,
    pub passed: bool,
}

fn check_loss(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = &ctx.config;
    let d = cfg.dims.d;
    let check = &cfg.check;
    if check.trials == 0 || !(check.scale > 0.0) {
        return Err(CliError::Config("check.trials must be >= 1 and check.scale > 0".into()));
    }
    let spec = cfg.loss.build(d).map_err(oracle_err("setup"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let scale = check.scale;
    let mut draw = move || -> Vec<f64> {
        (0..d)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let mut points = Vec::with_capacity(check.trials);
    let report = check_assumption1(
        &spec,
        || {
            let t = (draw(), draw(), draw());
            points.push((t.0.clone(), t.1.clone()));
            t
        },
        check.trials,
    );
    let fd_max_error = points
        .iter()
        .map(|(z, y)| grad_fd_check(&spec, z, y, check.fd_step))
        .fold(0.0, f64::max);
    let passed = report.passed && fd_max_error <= check.fd_tol;

    println!("  loss {} (beta {}, mu {}), {} trials", report.loss, report.beta, report.mu, report.trials);
    println!("  smoothness   {:.3e}  {}", report.smoothness_violation, status(report.smoothness_ok()));
    println!("  convexity    {:.3e}  {}", report.convexity_violation, status(report.convexity_ok()));
    println!("  monotonicity {:.3e}  {}", report.monotonicity_violation, status(report.monotonicity_ok()));
    println!("  coercivity   {:.3e}  {}", report.coercivity_violation, status(report.coercivity_ok()));
    println!("  gradient fd  {:.3e}  {}", fd_max_error, status(fd_max_error <= check.fd_tol));

    let file = CheckLossFile {
        seed: ctx.seed,
        d,
        loss: cfg.loss.clone(),
        fd_points: points.len(),
        report,
        fd_max_error,
        fd_tol: check.fd_tol,
        passed,
    };
    let path = ctx.out.join("check_loss.json");
    io::write_json(&path, &file)?;
    Ok(Outcome {
        passed,
        files: vec![path],
    })
}

// ---------------------------------------------------------------------------
// audit

/// Oracle-only part of an audit.
#[derive(Debug, Clone, Serialize)]
pub struct OracleAudit {
    pub well_specified: bool,
    pub truth: TruthEstimate,
    /// `bound >= truth`; a miss is an expected low-probability event and is
    /// recorded rather than treated as an error.
    pub covered: bool,
    pub rhat: f64,
    pub bound_thm2: Option<f64>,
    pub rhat_covered: Option<bool>,
    pub radius_thm2: Option<RadiusComponents>,
    pub diagnostics: RepDiagnostics,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditFile {
    pub mode: Mode,
    pub observable_mode: bool,
    pub seed: u64,
    pub rep_seed: u64,
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub loss: String,
    pub trainer: String,
    pub beta: f64,
    pub alpha: f64,
    pub alpha_is_mu: bool,
    pub sigma: f64,
    pub t: f64,
    pub rho_policy: RhoPolicy,
    pub fixed_point: FixedPoint,
    pub target_radius: Option<f64>,
    pub rho1: f64,
    pub rho2: f64,
    pub r_diamond: f64,
    pub r_sharp: f64,
    pub tune_diamond: Option<TuneSummary>,
    pub tune_sharp: Option<TuneSummary>,
    pub opt_diamond: f64,
    pub opt_sharp: f64,
    pub lemma1: ProcessBoundCheck,
    pub training_error: f64,
    pub trainer_stationarity: [f64; 3],
    pub trainer_tolerance: f64,
    pub max_solve_residual: f64,
    pub bound: BoundReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleAudit>,
    pub passed: bool,
}

fn audit(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = &ctx.config;
    let t = cfg.experiment.t;
    let (core, ds, bound, oracle, spec, trainer, sigma) = match ctx.mode {
        Mode::Oracle => {
            let scn = Scenario::build(&cfg.scenario()).map_err(oracle_err("setup"))?;
            let settings = cfg.coverage_settings(ctx.seed);
            let rep = replicate(&scn, 0, &settings).map_err(oracle_err("audit"))?;
            let oracle = OracleAudit {
                well_specified: scn.well_specified,
                truth: rep.truth,
                covered: rep.row.covered,
                rhat: rep.row.rhat,
                bound_thm2: scn.well_specified.then_some(rep.row.bound_thm2),
                rhat_covered: scn.well_specified.then_some(rep.row.rhat_covered),
                radius_thm2: rep.radius_thm2,
                diagnostics: rep.diagnostics,
            };
            (
                rep.core,
                rep.dataset,
                rep.bound_thm1,
                Some(oracle),
                scn.spec.clone(),
                scn.trainer.clone(),
                scn.noise.sigma,
            )
        }
        Mode::Observable => {
            let pb = Problem::build(ctx)?;
            let settings = cfg.audit_settings(derive_seed(ctx.rep_seed(), 3));
            let core = run_audit(&*pb.trainer, &pb.ds, &pb.spec, &pb.class, pb.eps.clone(), &settings)
                .map_err(risk_err("audit"))?;
            let bound = excess_risk_bound(
                BoundInputs {
                    empirical_excess: None,
                    training_error: Some(core.training_error),
                    opt_diamond: core.opt_diamond,
                    opt_sharp: core.opt_sharp,
                    w: core.lemma1.w_at_r_diamond,
                    t_process: core.lemma1.t_at_r_sharp,
                    pilot_diamond: None,
                    pilot_sharp: None,
                    r: core.fixed_point.r,
                    bias_norm: None,
                    beta: pb.spec.beta(),
                    alpha: pb.spec.alpha(),
                    sigma: pb.sigma,
                    t,
                    n: pb.ds.n(),
                    d: pb.ds.d(),
                },
                BoundMode::Observable,
                settings.variant,
            )
            .map_err(risk_err("bound"))?;
            (core, pb.ds, bound, None, pb.spec, pb.trainer, pb.sigma)
        }
    };

    let out = &core.out;
    let passed = core.lemma1.holds;
    println!(
        "  n {} p {} d {}  loss {}  trainer {}",
        ds.n(),
        ds.p(),
        ds.d(),
        spec.name(),
        trainer.name()
    );
    println!(
        "  r* {:.6}  rho1 {:.6}  rho2 {:.6}  r_diamond {:.6}  r_sharp {:.6}",
        core.fixed_point.r,
        out.rho1(),
        out.rho2(),
        out.r_diamond(),
        out.r_sharp()
    );
    println!(
        "  process check: W {:.6} <= Opt_diamond {:.6}, T {:.6} <= Opt_sharp {:.6}  {}",
        core.lemma1.w_at_r_diamond,
        core.lemma1.opt_diamond,
        core.lemma1.t_at_r_sharp,
        core.lemma1.opt_sharp,
        status(core.lemma1.holds)
    );
    println!(
        "  bound {:.6} at confidence {:.4}{}",
        bound.total_bound,
        bound.confidence,
        if bound.observable_mode { " (observable)" } else { "" }
    );
    if let Some(o) = &oracle {
        println!(
            "  truth {:.6}  covered {}  rhat {:.6}",
            o.truth.value, o.covered, o.rhat
        );
    }

    let file = AuditFile {
        mode: ctx.mode,
        observable_mode: ctx.mode == Mode::Observable,
        seed: ctx.seed,
        rep_seed: ctx.rep_seed(),
        n: ds.n(),
        p: ds.p(),
        d: ds.d(),
        loss: spec.name().to_string(),
        trainer: trainer.name().to_string(),
        beta: spec.beta(),
        alpha: spec.alpha(),
        alpha_is_mu: true,
        sigma,
        t,
        rho_policy: cfg.experiment.rho,
        fixed_point: core.fixed_point,
        target_radius: core.target_radius,
        rho1: out.rho1(),
        rho2: out.rho2(),
        r_diamond: out.r_diamond(),
        r_sharp: out.r_sharp(),
        tune_diamond: core.tune_diamond.clone(),
        tune_sharp: core.tune_sharp.clone(),
        opt_diamond: core.opt_diamond,
        opt_sharp: core.opt_sharp,
        lemma1: core.lemma1,
        training_error: core.training_error,
        trainer_stationarity: out.trainer_stationarity(),
        trainer_tolerance: trainer.tolerance(),
        max_solve_residual: out.max_solve_residual(),
        bound,
        oracle,
        passed,
    };
    let files = write_bundle(&ctx.out, &core, &file)?;
    Ok(Outcome { passed, files })
}

fn write_bundle(dir: &Path, core: &AuditCore, file: &AuditFile) -> Result<Vec<PathBuf>, CliError> {
    let out = &core.out;
    let mut files = Vec::new();
    for (name, ds) in [
        ("d0.csv", out.d0()),
        ("d_diamond.csv", out.d_diamond()),
        ("d_sharp.csv", out.d_sharp()),
    ] {
        let path = dir.join(name);
        io::write_dataset_csv(&path, ds)?;
        files.push(path);
    }
    let path = dir.join("audit.json");
    io::write_json(&path, file)?;
    files.push(path);
    Ok(files)
}

// ---------------------------------------------------------------------------
// tune-rho

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneRow {
    pub side: Side,
    pub step: usize,
    pub phase: ScanPhase,
    pub rho: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SideOutcome {
    pub side: Side,
    pub rho: Option<f64>,
    pub achieved: Option<f64>,
    pub gap: Option<bool>,
    pub evaluations: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TuneFile {
    pub seed: u64,
    pub target: f64,
    /// `config` when the target was given, `fixed-point` for `2 r*`.
    pub target_source: &'static str,
    pub fixed_point: Option<FixedPoint>,
    pub tol: f64,
    pub bracket: (f64, f64),
    pub diamond: SideOutcome,
    pub sharp: SideOutcome,
    pub passed: bool,
}

fn tune_rho(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = &ctx.config;
    let pb = Problem::build(ctx)?;
    let settings = cfg.audit_settings(derive_seed(ctx.rep_seed(), 3));
    let base = BaseFit::train(&*pb.trainer, &pb.ds, &pb.spec)
        .map_err(|e| risk_err("train")(e.into()))?;
    let (target, target_source, fixed_point) = match cfg.tune.target {
        Some(t) => (t, "config", None),
        None => {
            let (w, tp) = processes(&base, &pb.eps, &pb.class, settings.sup).map_err(risk_err("processes"))?;
            let fp = fixed_point_radius(
                |s| w.value(s).map(|v| v.value),
                |s| tp.value(s).map(|v| v.value),
                pb.spec.alpha(),
                settings.r_max,
                settings.fixed_point_tol,
            )
            .map_err(risk_err("fixed point"))?;
            (2.0 * fp.r, "fixed-point", Some(fp))
        }
    };
    let tune = |side| {
        tune_rho_for_radius(
            &base,
            &*pb.trainer,
            &pb.spec,
            &pb.eps,
            target,
            side,
            &settings.tune,
            &settings.solver,
        )
    };
    let (rd, rs) = rayon::join(|| tune(Side::Diamond), || tune(Side::Sharp));
    let mut rows = Vec::new();
    let mut summarize = |side: Side, res: Result<crate::risk::TuneResult, RiskError>| -> Result<SideOutcome, CliError> {
        let (table, outcome) = match res {
            Ok(r) => (
                r.table.clone(),
                SideOutcome {
                    side,
                    rho: Some(r.rho),
                    achieved: Some(r.achieved),
                    gap: Some(r.gap),
                    evaluations: r.table.len(),
                    error: None,
                },
            ),
            Err(RiskError::NoBracket { table }) => {
                let message = RiskError::NoBracket { table: table.clone() }.to_string();
                let n = table.len();
                (
                    table,
                    SideOutcome {
                        side,
                        rho: None,
                        achieved: None,
                        gap: None,
                        evaluations: n,
                        error: Some(message),
                    },
                )
            }
            Err(e) => return Err(risk_err("tune")(e)),
        };
        rows.extend(table.into_iter().enumerate().map(|(step, r)| TuneRow {
            side,
            step,
            phase: r.phase,
            rho: r.rho,
            radius: r.radius,
        }));
        Ok(outcome)
    };
    let diamond = summarize(Side::Diamond, rd)?;
    let sharp = summarize(Side::Sharp, rs)?;
    let ok = |s: &SideOutcome| s.gap == Some(false);
    let passed = ok(&diamond) && ok(&sharp);
    println!("  target radius {target:.6} ({target_source})");
    for s in [&diamond, &sharp] {
        match (s.rho, s.achieved) {
            (Some(rho), Some(a)) => println!(
                "  {:?}: rho {rho:.8} radius {a:.8} after {} evaluations  {}",
                s.side,
                s.evaluations,
                status(ok(s))
            ),
            _ => println!("  {:?}: no noise scale reaches the target  FAIL", s.side),
        }
    }
    let file = TuneFile {
        seed: ctx.seed,
        target,
        target_source,
        fixed_point,
        tol: settings.tune.tol,
        bracket: settings.tune.bracket,
        diamond,
        sharp,
        passed,
    };
    let csv = ctx.out.join("tune_rho.csv");
    io::write_csv_rows(&csv, &rows)?;
    let json = ctx.out.join("tune_rho.json");
    io::write_json(&json, &file)?;
    Ok(Outcome {
        passed,
        files: vec![csv, json],
    })
}

// ---------------------------------------------------------------------------
// radius

#[derive(Debug, Clone, Serialize)]
pub struct RadiusFile {
    pub mode: Mode,
    pub observable_mode: bool,
    pub seed: u64,
    /// `||g_tilde||_n`; for the unconstrained class `r* = 8 ||g_tilde||_n / alpha`.
    pub g_tilde_norm: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub r_diamond: f64,
    pub r_sharp: f64,
    pub w_at_2r_diamond: f64,
    pub t_at_2r_sharp: f64,
    /// `||f_hat - f_dagger||_n` (oracle mode).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rhat: Option<f64>,
    /// Solved corollary form minus the split form; negative when the
    /// corollary is tighter.
    pub corollary_minus_theorem2: Option<f64>,
    pub caveats: Vec<String>,
    pub report: RadiusReport,
}

fn radius(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = &ctx.config;
    let pb = Problem::build(ctx)?;
    let settings = cfg.audit_settings(derive_seed(ctx.rep_seed(), 3));
    let core = run_audit(&*pb.trainer, &pb.ds, &pb.spec, &pb.class, pb.eps.clone(), &settings)
        .map_err(risk_err("audit"))?;
    let out = &core.out;
    let base = &out.base;
    let (n, d) = (pb.ds.n(), pb.ds.d());
    let alpha = pb.spec.alpha();
    let t = cfg.experiment.t;
    let r = core.fixed_point.r;
    let w_2r = core.w_process.value(2.0 * r).map_err(risk_err("radius"))?.value;
    let t_2r = core.t_process.value(2.0 * r).map_err(risk_err("radius"))?.value;
    let oracle = ctx.mode == Mode::Oracle;
    let scn = pb.scenario.as_ref().filter(|_| oracle);
    let well_specified = scn.is_some_and(|s| s.well_specified);
    let mut caveats = Vec::new();

    let (pilot_diamond, pilot_sharp) = match scn {
        Some(s) => pilot_errors(base, &out.eps, &s.f_star_values, &pb.spec, r, &pb.class, settings.sup)
            .map_err(risk_err("pilots"))?,
        None => {
            caveats.push("pilot errors need the true regression function; set to zero".into());
            (0.0, 0.0)
        }
    };
    let deviation = RadiusReport::deviation_theorem2(alpha, pb.sigma, t, n, d);
    let r_theorem2 = if well_specified {
        Some(
            radius_bound_theorem2(w_2r, t_2r, pilot_diamond, pilot_sharp, alpha, pb.sigma, t, n, d, true)
                .map_err(risk_err("radius"))?,
        )
    } else {
        caveats.push("split radius bound omitted: it needs oracle mode and a well-specified class".into());
        None
    };

    let (rd, rs) = (out.r_diamond(), out.r_sharp());
    let w_d = core.w_process.value(2.0 * rd).map_err(risk_err("radius"))?.value;
    let t_s = core.t_process.value(2.0 * rs).map_err(risk_err("radius"))?.value;
    let r_corollary: Option<CorollaryBound> = if rd > 0.0 && rs > 0.0 {
        Some(
            radius_bound_corollary(rd, rs, w_d, t_s, pilot_diamond, pilot_sharp, alpha, pb.sigma, t, n, d)
                .map_err(risk_err("radius"))?,
        )
    } else {
        caveats.push("slope bound omitted: a refit radius is zero".into());
        None
    };
    let corollary_minus_theorem2 = match (r_corollary, r_theorem2) {
        (Some(c), Some(b)) => Some(c.solved - b),
        _ => None,
    };
    let rhat = match scn {
        Some(s) => Some(
            crate::models::empirical_norm_values(&base.fitted, &s.f_dagger_values)
                .map_err(|e| risk_err("radius")(e.into()))?,
        ),
        None => None,
    };
    let report = RadiusReport {
        r_fixed_point: r,
        fixed_point_saturated: core.fixed_point.saturated,
        r_theorem2,
        r_corollary,
        components: RadiusComponents {
            r_eval: r,
            w_2r,
            t_2r,
            pilot_diamond,
            pilot_sharp,
            deviation_theorem2: deviation,
        },
        alpha,
        sigma: pb.sigma,
        t,
        n,
        d,
        well_specified,
        pilots_available: scn.is_some(),
        confidence_theorem2: confidence_theorem2(t),
        alpha_is_mu: true,
    };
    let g_tilde_norm = rms(out.g_tilde());
    println!("  fixed point r* {:.8}{}", r, if core.fixed_point.saturated { " (saturated)" } else { "" });
    if let Some(b) = r_theorem2 {
        println!("  split bound {b:.6} at confidence {:.4}", report.confidence_theorem2);
    }
    if let Some(c) = r_corollary {
        println!("  slope bound {:.6} (simplified {:.6})", c.solved, c.simplified);
    }
    if let Some(rh) = rhat {
        println!("  rhat {rh:.6}");
    }
    let file = RadiusFile {
        mode: ctx.mode,
        observable_mode: !oracle,
        seed: ctx.seed,
        g_tilde_norm,
        rho1: out.rho1(),
        rho2: out.rho2(),
        r_diamond: rd,
        r_sharp: rs,
        w_at_2r_diamond: w_d,
        t_at_2r_sharp: t_s,
        rhat,
        corollary_minus_theorem2,
        caveats,
        report,
    };
    let path = ctx.out.join("radius.json");
    io::write_json(&path, &file)?;
    Ok(Outcome {
        passed: true,
        files: vec![path],
    })
}

// ---------------------------------------------------------------------------
// coverage

fn coverage(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = &ctx.config;
    if ctx.mode == Mode::Observable {
        return Err(CliError::Config("coverage needs oracle mode".into()));
    }
    let scn = Scenario::build(&cfg.scenario()).map_err(oracle_err("setup"))?;
    let settings = cfg.coverage_settings(ctx.seed);
    let report = coverage_experiment(&scn, &settings).map_err(oracle_err("coverage"))?;
    println!(
        "  {} reps ({} failed), well specified {}",
        report.reps, report.failures, report.well_specified
    );
    println!(
        "  excess-risk bound coverage {:.4} (floor {:.4})  {}",
        report.coverage_thm1,
        report.floor_thm1,
        status(report.coverage_thm1 >= report.floor_thm1)
    );
    if let Some(c) = report.coverage_thm2 {
        println!(
            "  radius bound coverage {:.4} (floor {:.4})  {}",
            c,
            report.floor_thm2,
            status(c >= report.floor_thm2)
        );
    }
    println!(
        "  process bound pass rate {:.4}  {}",
        report.lemma1_pass_rate,
        status(report.lemma1_pass_rate == 1.0)
    );
    if report.below_recommended_reps {
        println!("  note: fewer replications than recommended; fractions are noisy");
    }
    let csv = ctx.out.join("coverage_reps.csv");
    io::write_csv_rows(&csv, &report.rows)?;
    let json = ctx.out.join("coverage.json");
    io::write_json(&json, &report)?;
    Ok(Outcome {
        passed: report.passed,
        files: vec![csv, json],
    })
}
