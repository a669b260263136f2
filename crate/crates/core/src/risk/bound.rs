//! The high-probability excess-risk bound
//!
//! ```text
//! E_fix <= (beta/alpha) E_D + (beta/alpha)(Opt_d + Opt_s + B_d + B_s)
//!          + [(5 sqrt(d) + 3 sqrt(log n) + 4) r + ||f_dagger - f*||_n] * 2 sqrt(2) beta sigma t / (alpha sqrt(n))
//! ```
//!
//! holding with probability at least `1 - 6 exp(-t^2)` for any `r >= ||f_hat - f_dagger||_n`,
//! when the noise scales make both refit radii equal to `2r`.

use serde::{Deserialize, Serialize};

use super::{OptimismVariant, RiskError};

/// Whether oracle-only pieces are available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMode {
    /// All pieces, including those that need the true regression function.
    #[default]
    Oracle,
    /// Only what a real audit can compute: the training error stands in for
    /// the empirical excess risk, pilot errors and the bias term are dropped.
    Observable,
}

/// Everything the bound is assembled from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Empirical excess risk (oracle mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empirical_excess: Option<f64>,
    /// Mean training loss of `f_hat` (observable mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_error: Option<f64>,
    pub opt_diamond: f64,
    pub opt_sharp: f64,
    /// `W_n(r_diamond)` and `T_n(r_sharp)`, carried for the report only.
    pub w: f64,
    pub t_process: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot_diamond: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot_sharp: Option<f64>,
    pub r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_norm: Option<f64>,
    pub beta: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub t: f64,
    pub n: usize,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub inputs: BoundInputs,
    pub mode: BoundMode,
    pub observable_mode: bool,
    pub optimism_variant: OptimismVariant,
    /// The strong-convexity constant used in the bound is the loss's `mu`.
    pub alpha_is_mu: bool,
    /// Empirical term actually used (excess risk, or training error).
    pub empirical_term: f64,
    /// `B_d + B_s`; absent in observable mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot_term: Option<f64>,
    pub deviation: f64,
    pub total_bound: f64,
    pub confidence: f64,
    pub caveats: Vec<String>,
}

/// `1 - 6 exp(-t^2)`.
pub fn confidence_theorem1(t: f64) -> f64 {
    1.0 - 6.0 * (-t * t).exp()
}

/// `(5 sqrt(d) + 3 sqrt(log n) + 4)`.
pub(crate) fn dimension_factor(d: usize, n: usize) -> f64 {
    5.0 * (d as f64).sqrt() + 3.0 * (n as f64).ln().sqrt() + 4.0
}

fn assemble(
    inputs: &BoundInputs,
    mode: BoundMode,
) -> Result<(f64, f64, f64, f64, Vec<String>), RiskError> {
    let ratio = inputs.beta / inputs.alpha;
    let mut caveats = Vec::new();
    let (empirical, pilots, bias) = match mode {
        BoundMode::Oracle => (
            inputs
                .empirical_excess
                .ok_or(RiskError::MissingPiece("empirical_excess"))?,
            inputs.pilot_diamond.ok_or(RiskError::MissingPiece("pilot_diamond"))?
                + inputs.pilot_sharp.ok_or(RiskError::MissingPiece("pilot_sharp"))?,
            inputs.bias_norm.ok_or(RiskError::MissingPiece("bias_norm"))?,
        ),
        BoundMode::Observable => {
            caveats.push(
                "training error replaces the empirical excess risk (an upper bound on it only \
                 when the true regression function has nonnegative training loss)"
                    .into(),
            );
            caveats.push("pilot errors omitted: they require the true regression function".into());
            caveats.push("model-misspecification bias omitted".into());
            (
                inputs
                    .training_error
                    .ok_or(RiskError::MissingPiece("training_error"))?,
                0.0,
                0.0,
            )
        }
    };
    let deviation = (dimension_factor(inputs.d, inputs.n) * inputs.r + bias)
        * (2.0 * 2.0_f64.sqrt() * inputs.beta * inputs.sigma * inputs.t)
        / (inputs.alpha * (inputs.n as f64).sqrt());
    let total = ratio * empirical + ratio * (inputs.opt_diamond + inputs.opt_sharp + pilots) + deviation;
    Ok((empirical, pilots, deviation, total, caveats))
}

/// Assembles the excess-risk bound.
pub fn excess_risk_bound(
    inputs: BoundInputs,
    mode: BoundMode,
    variant: OptimismVariant,
) -> Result<BoundReport, RiskError> {
    let ok = inputs.alpha > 0.0
        && inputs.beta > 0.0
        && inputs.sigma >= 0.0
        && inputs.t > 0.0
        && inputs.r >= 0.0
        && inputs.n >= 1
        && inputs.d >= 1;
    if !ok {
        return Err(RiskError::InvalidInput(format!(
            "bound needs alpha, beta, t > 0, sigma, r >= 0, n, d >= 1: {inputs:?}"
        )));
    }
    let (empirical_term, pilot_term, deviation, total_bound, caveats) = assemble(&inputs, mode)?;
    Ok(BoundReport {
        inputs,
        mode,
        observable_mode: mode == BoundMode::Observable,
        optimism_variant: variant,
        alpha_is_mu: true,
        empirical_term,
        pilot_term: (mode == BoundMode::Oracle).then_some(pilot_term),
        deviation,
        total_bound,
        confidence: confidence_theorem1(inputs.t),
        caveats,
    })
}

impl BoundReport {
    /// Rebuilds the total from the stored inputs.
    pub fn recompute(&self) -> Result<f64, RiskError> {
        Ok(assemble(&self.inputs, self.mode)?.3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_inputs() -> BoundInputs {
        BoundInputs {
            empirical_excess: Some(0.0),
            training_error: None,
            opt_diamond: 0.0,
            opt_sharp: 0.0,
            w: 0.0,
            t_process: 0.0,
            pilot_diamond: Some(0.0),
            pilot_sharp: Some(0.0),
            r: 0.0,
            bias_norm: Some(0.0),
            beta: 2.0,
            alpha: 2.0,
            sigma: 1.0,
            t: 2.0,
            n: 100,
            d: 2,
        }
    }

    #[test]
    fn all_zero_pieces_give_zero() {
        let rep = excess_risk_bound(zero_inputs(), BoundMode::Oracle, OptimismVariant::default())
            .unwrap();
        assert_eq!(rep.total_bound, 0.0);
    }

    #[test]
    fn confidence_label() {
        assert!((confidence_theorem1(2.0) - 0.890_106_166_7).abs() < 1e-9);
    }

    #[test]
    fn hand_case() {
        let mut i = zero_inputs();
        i.r = 0.5;
        i.opt_diamond = 0.03;
        i.opt_sharp = 0.04;
        i.pilot_diamond = Some(0.01);
        i.pilot_sharp = Some(0.02);
        i.empirical_excess = Some(-0.05);
        let rep = excess_risk_bound(i, BoundMode::Oracle, OptimismVariant::default()).unwrap();
        let dev = (5.0 * 2f64.sqrt() + 3.0 * 100f64.ln().sqrt() + 4.0) * 0.5 * 2.0 * 2f64.sqrt()
            * 2.0
            * 1.0
            * 2.0
            / (2.0 * 10.0);
        let expect = -0.05 + (0.03 + 0.04 + 0.01 + 0.02) + dev;
        assert!((rep.total_bound - expect).abs() < 1e-12);
        assert_eq!(rep.recompute().unwrap().to_bits(), rep.total_bound.to_bits());
    }

    #[test]
    fn oracle_mode_needs_pieces() {
        let mut i = zero_inputs();
        i.pilot_sharp = None;
        assert_eq!(
            excess_risk_bound(i, BoundMode::Oracle, OptimismVariant::default()),
            Err(RiskError::MissingPiece("pilot_sharp"))
        );
        i.training_error = Some(0.3);
        let rep = excess_risk_bound(i, BoundMode::Observable, OptimismVariant::default()).unwrap();
        assert!(rep.observable_mode && !rep.caveats.is_empty());
        assert_eq!(rep.total_bound, 0.3);
    }

    #[test]
    fn monotone_in_t() {
        let mut i = zero_inputs();
        i.r = 0.3;
        let mut last = f64::NEG_INFINITY;
        for t in [0.5, 1.0, 2.0, 3.0] {
            i.t = t;
            let b = excess_risk_bound(i, BoundMode::Oracle, OptimismVariant::default())
                .unwrap()
                .total_bound;
            assert!(b >= last);
            last = b;
        }
    }
}
