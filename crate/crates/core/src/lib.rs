//! Excess-risk certificates for black-box empirical risk minimizers.
//!
//! The crate implements doubly wild refitting in the fixed-design setting:
//! a trained predictor's loss gradients are flipped by Rademacher signs,
//! turned into two sets of pseudo-outcomes ("wild responses") by inverting
//! the loss gradient in its outcome argument, and the black-box trainer is
//! refit on both. The three predictors yield computable upper bounds on the
//! localized empirical processes that control the excess risk.
//!
//! Module map:
//!
//! - [`losses`]: convex losses, built-in families and regularity checks.
//! - [`models`]: datasets, predictors, function classes and trainers.
//! - [`wildresp`]: wild-response construction (closed form, damped Newton,
//!   proximal point).
//! - [`engine`]: the refitting procedure end to end.
//! - [`risk`]: empirical-process suprema, wild optimisms, excess-risk and
//!   radius bounds, noise-scale tuning.
//! - [`oracle`]: synthetic ground truth and coverage experiments.
//! - [`cli`]: configuration, report files and the command front end.

pub mod cli;
pub mod engine;
pub mod io;
pub mod losses;
pub mod models;
pub mod optim;
pub mod oracle;
pub mod risk;
pub mod vecops;
pub mod wildresp;

pub use engine::{doubly_wild_refit, rademacher, BaseFit, WildRefitOutput};
pub use losses::LossSpec;
pub use models::{Dataset, FunctionClass, LinearFeatureClass, Predictor, Trainer};
