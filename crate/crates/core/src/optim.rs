//! Projected gradient descent with backtracking, shared by the ERM trainers.

/// Stopping and step parameters for [`projected_gradient_descent`].
#[derive(Debug, Clone, Copy)]
pub struct GdSettings {
    /// Stop once the gradient-mapping norm is at most this.
    pub tol: f64,
    pub max_iter: usize,
    /// A step known to be safe (`1/L` for an `L`-smooth objective). Backtracking
    /// never goes below it, so rounding noise near the optimum cannot stall the
    /// line search.
    pub safe_step: f64,
}

#[derive(Debug, Clone)]
pub struct GdOutcome {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Gradient-mapping norm `||x - P(x - t g)|| / t` at `t = safe_step`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes a smooth convex objective over a convex set given by its
/// Euclidean projection (`project` is the identity when unconstrained).
pub fn projected_gradient_descent<F, G, P>(
    x0: Vec<f64>,
    objective: F,
    gradient: G,
    project: P,
    settings: GdSettings,
) -> GdOutcome
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&mut [f64]),
{
    let t0 = settings.safe_step;
    let mut x = x0;
    project(&mut x);
    let mut fx = objective(&x);
    let mut step = t0;

    let residual_at = |x: &[f64], g: &[f64]| -> f64 {
        let mut trial: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - t0 * b).collect();
        project(&mut trial);
        let s: f64 = x.iter().zip(&trial).map(|(a, b)| (a - b) * (a - b)).sum();
        s.sqrt() / t0
    };

    let mut g = gradient(&x);
    let mut residual = residual_at(&x, &g);
    let mut iterations = 0;
    while residual > settings.tol && iterations < settings.max_iter {
        iterations += 1;
        let mut t = (2.0 * step).max(t0);
        let (xn, fxn) = loop {
            let mut xn: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - t * b).collect();
            project(&mut xn);
            let fxn = objective(&xn);
            if t <= t0 {
                break (xn, fxn);
            }
            let mut model = fx;
            let mut dsq = 0.0;
            for ((a, b), gi) in xn.iter().zip(&x).zip(&g) {
                model += gi * (a - b);
                dsq += (a - b) * (a - b);
            }
            model += dsq / (2.0 * t);
            if fxn <= model {
                break (xn, fxn);
            }
            t = (0.5 * t).max(t0);
        };
        step = t;
        x = xn;
        fx = fxn;
        g = gradient(&x);
        residual = residual_at(&x, &g);
    }
    GdOutcome {
        converged: residual <= settings.tol,
        x,
        objective: fx,
        residual,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_minimum() {
        // f(x) = (x0 - 1)^2 + 10 (x1 + 2)^2
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2);
        let g = |x: &[f64]| vec![2.0 * (x[0] - 1.0), 20.0 * (x[1] + 2.0)];
        let out = projected_gradient_descent(
            vec![0.0, 0.0],
            f,
            g,
            |_| {},
            GdSettings {
                tol: 1e-10,
                max_iter: 10_000,
                safe_step: 1.0 / 20.0,
            },
        );
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-9 && (out.x[1] + 2.0).abs() < 1e-9);
    }

    #[test]
    fn ball_constrained_minimum() {
        // min ||x - (3, 4)||^2 over the unit ball -> (0.6, 0.8)
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + (x[1] - 4.0).powi(2);
        let g = |x: &[f64]| vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] - 4.0)];
        let proj = |x: &mut [f64]| {
            let n = (x[0] * x[0] + x[1] * x[1]).sqrt();
            if n > 1.0 {
                x[0] /= n;
                x[1] /= n;
            }
        };
        let out = projected_gradient_descent(
            vec![0.0, 0.0],
            f,
            g,
            proj,
            GdSettings {
                tol: 1e-10,
                max_iter: 1000,
                safe_step: 0.5,
            },
        );
        assert!(out.converged);
        assert!((out.x[0] - 0.6).abs() < 1e-9 && (out.x[1] - 0.8).abs() < 1e-9);
    }

    #[test]
    fn budget_exhaustion_reported() {
        let f = |x: &[f64]| x[0] * x[0];
        let g = |x: &[f64]| vec![2.0 * x[0]];
        let out = projected_gradient_descent(
            vec![1.0],
            f,
            g,
            |_| {},
            GdSettings {
                tol: 1e-12,
                max_iter: 1,
                safe_step: 1e-3,
            },
        );
        assert!(!out.converged);
        assert_eq!(out.iterations, 1);
    }
}
