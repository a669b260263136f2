//! Bounds on the estimation radius `r_hat = ||f_hat - f_dagger||_n`.

use serde::{Deserialize, Serialize};

use super::RiskError;

/// Result of the fixed-point search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub r: f64,
    /// `h(r_max) > 0`: the crossing lies beyond the search range.
    pub saturated: bool,
    /// `h(r)` at the returned radius.
    pub h_at_r: f64,
    pub evaluations: usize,
}

/// Largest `r` in `[0, r_max]` with `r <= sqrt((2/alpha)(W(2r) + T(2r)))`.
///
/// For concave `W`, `T` vanishing at zero, `h(r) = sqrt((2/alpha)(W(2r)+T(2r))) - r`
/// is concave with `h(0) = 0`, so `{h >= 0}` is an interval starting at zero
/// and bisection finds its right end.
pub fn fixed_point_radius<W, T>(
    mut wf: W,
    mut tf: T,
    alpha: f64,
    r_max: f64,
    tol: f64,
) -> Result<FixedPoint, RiskError>
where
    W: FnMut(f64) -> Result<f64, RiskError>,
    T: FnMut(f64) -> Result<f64, RiskError>,
{
    if !(alpha > 0.0 && r_max > 0.0 && tol > 0.0) {
        return Err(RiskError::InvalidInput(format!(
            "fixed point needs alpha, r_max, tol > 0 (got {alpha}, {r_max}, {tol})"
        )));
    }
    let mut evaluations = 0;
    let mut h = |r: f64| -> Result<f64, RiskError> {
        evaluations += 1;
        let s = wf(2.0 * r)? + tf(2.0 * r)?;
        Ok((2.0 / alpha * s.max(0.0)).sqrt() - r)
    };
    let h_max = h(r_max)?;
    if h_max > 0.0 {
        return Ok(FixedPoint {
            r: r_max,
            saturated: true,
            h_at_r: h_max,
            evaluations: 1,
        });
    }
    let (mut lo, mut hi) = (0.0_f64, r_max);
    let mut h_lo = 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let hm = h(mid)?;
        if hm >= 0.0 {
            lo = mid;
            h_lo = hm;
        } else {
            hi = mid;
        }
    }
    Ok(FixedPoint {
        r: lo,
        saturated: false,
        h_at_r: h_lo,
        evaluations,
    })
}

/// `1 - 2 exp(-t^2)`.
pub fn confidence_theorem2(t: f64) -> f64 {
    1.0 - 2.0 * (-t * t).exp()
}

fn check_nonnegative(values: &[(&str, f64)]) -> Result<(), RiskError> {
    for (name, v) in values {
        if !(*v >= 0.0) || !v.is_finite() {
            return Err(RiskError::InvalidInput(format!(
                "{name} must be finite and nonnegative, got {v}"
            )));
        }
    }
    Ok(())
}

/// `((10 sqrt(d) + 6 sqrt(log n) + 4)/alpha + 1) * scale * sigma t / sqrt(n)`.
fn radius_deviation(alpha: f64, sigma: f64, t: f64, n: usize, d: usize, scale: f64) -> f64 {
    let factor = 10.0 * (d as f64).sqrt() + 6.0 * (n as f64).ln().sqrt() + 4.0;
    (factor / alpha + 1.0) * scale * 2.0_f64.sqrt() * sigma * t / (n as f64).sqrt()
}

/// Split form of the radius bound in the well-specified setting:
/// `sqrt((2/alpha)(W(2r) + T(2r))) + sqrt((2/alpha)(B_d + B_s)) + deviation`.
#[allow(clippy::too_many_arguments)]
pub fn radius_bound_theorem2(
    w2r: f64,
    t2r: f64,
    b_d: f64,
    b_s: f64,
    alpha: f64,
    sigma: f64,
    t: f64,
    n: usize,
    d: usize,
    well_specified: bool,
) -> Result<f64, RiskError> {
    if !well_specified {
        return Err(RiskError::NotWellSpecified);
    }
    check_nonnegative(&[
        ("W_n(2r)", w2r),
        ("T_n(2r)", t2r),
        ("B_diamond", b_d),
        ("B_sharp", b_s),
        ("sigma", sigma),
    ])?;
    if !(alpha > 0.0 && t > 0.0 && n >= 1 && d >= 1) {
        return Err(RiskError::InvalidInput("alpha, t > 0 and n, d >= 1 required".into()));
    }
    Ok((2.0 / alpha * (w2r + t2r)).sqrt()
        + (2.0 / alpha * (b_d + b_s)).sqrt()
        + radius_deviation(alpha, sigma, t, n, d, 2.0))
}

/// Both forms of the slope-based radius bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorollaryBound {
    /// `4 W(2 r_d)/(alpha r_d) + 4 T(2 r_s)/(alpha r_s)`.
    pub slope_term: f64,
    /// Slope term plus the pilot and deviation terms.
    pub solved: f64,
    /// `max{r_d, r_s, slope_term}`, lower-order terms dropped.
    pub simplified: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn radius_bound_corollary(
    r_diamond: f64,
    r_sharp: f64,
    w_at_2r_diamond: f64,
    t_at_2r_sharp: f64,
    b_d: f64,
    b_s: f64,
    alpha: f64,
    sigma: f64,
    t: f64,
    n: usize,
    d: usize,
) -> Result<CorollaryBound, RiskError> {
    if !(r_diamond > 0.0 && r_sharp > 0.0) {
        return Err(RiskError::InvalidInput(format!(
            "refit radii must be positive (got {r_diamond}, {r_sharp})"
        )));
    }
    check_nonnegative(&[
        ("W_n(2r)", w_at_2r_diamond),
        ("T_n(2r)", t_at_2r_sharp),
        ("B_diamond", b_d),
        ("B_sharp", b_s),
        ("sigma", sigma),
    ])?;
    if !(alpha > 0.0 && t > 0.0 && n >= 1 && d >= 1) {
        return Err(RiskError::InvalidInput("alpha, t > 0 and n, d >= 1 required".into()));
    }
    let slope_term =
        4.0 * w_at_2r_diamond / (alpha * r_diamond) + 4.0 * t_at_2r_sharp / (alpha * r_sharp);
    Ok(CorollaryBound {
        slope_term,
        solved: slope_term
            + (8.0 * (b_d + b_s) / alpha).sqrt()
            + radius_deviation(alpha, sigma, t, n, d, 4.0),
        simplified: r_diamond.max(r_sharp).max(slope_term),
    })
}

/// Terms the radius bounds were built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusComponents {
    /// Radius at which the processes and pilots were evaluated.
    pub r_eval: f64,
    pub w_2r: f64,
    pub t_2r: f64,
    pub pilot_diamond: f64,
    pub pilot_sharp: f64,
    pub deviation_theorem2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusReport {
    pub r_fixed_point: f64,
    pub fixed_point_saturated: bool,
    pub r_theorem2: Option<f64>,
    pub r_corollary: Option<CorollaryBound>,
    pub components: RadiusComponents,
    pub alpha: f64,
    pub sigma: f64,
    pub t: f64,
    pub n: usize,
    pub d: usize,
    pub well_specified: bool,
    pub pilots_available: bool,
    pub confidence_theorem2: f64,
    pub alpha_is_mu: bool,
}

impl RadiusReport {
    pub fn deviation_theorem2(alpha: f64, sigma: f64, t: f64, n: usize, d: usize) -> f64 {
        radius_deviation(alpha, sigma, t, n, d, 2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_fixed_point_closed_form() {
        for (g, alpha) in [(1.0, 2.0), (0.3, 1.0), (2.5, 4.0)] {
            let fp = fixed_point_radius(|s| Ok(s * g), |s| Ok(s * g), alpha, 1e6, 1e-8).unwrap();
            assert!((fp.r - 8.0 * g / alpha).abs() <= 1e-8, "{fp:?}");
            assert!(fp.h_at_r.abs() <= 1e-8);
        }
    }

    #[test]
    fn zero_gradient_gives_zero() {
        let fp = fixed_point_radius(|_| Ok(0.0), |_| Ok(0.0), 2.0, 10.0, 1e-10).unwrap();
        assert!(fp.r <= 1e-10);
    }

    #[test]
    fn saturation_flagged() {
        let fp = fixed_point_radius(|s| Ok(s), |s| Ok(s), 1.0, 1.0, 1e-8).unwrap();
        assert!(fp.saturated && fp.r == 1.0);
    }

    #[test]
    fn theorem2_pure_deviation_and_scaling() {
        let a = radius_bound_theorem2(0.0, 0.0, 0.0, 0.0, 2.0, 1.0, 2.0, 100, 2, true).unwrap();
        assert!((a - RadiusReport::deviation_theorem2(2.0, 1.0, 2.0, 100, 2)).abs() < 1e-15);
        assert_eq!(
            radius_bound_theorem2(0.0, 0.0, 0.0, 0.0, 2.0, 1.0, 2.0, 100, 2, false),
            Err(RiskError::NotWellSpecified)
        );
        assert!(radius_bound_theorem2(-1.0, 0.0, 0.0, 0.0, 2.0, 1.0, 2.0, 100, 2, true).is_err());
    }

    #[test]
    fn corollary_unconstrained_slope() {
        let g = 0.7;
        let alpha = 2.0;
        for r in [0.1, 1.0, 5.0] {
            let c = radius_bound_corollary(r, r, 2.0 * r * g, 2.0 * r * g, 0.0, 0.0, alpha, 0.0, 1.0, 50, 1)
                .unwrap();
            assert!((c.slope_term - 16.0 * g / alpha).abs() < 1e-12);
            assert_eq!(c.simplified, r.max(c.slope_term));
        }
        assert!(radius_bound_corollary(0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 5, 1).is_err());
    }
}
