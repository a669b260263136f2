//! Small dense-vector helpers on `&[f64]` slices.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `a + s * b`
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Root-mean-square Euclidean norm over rows: `sqrt((1/n) sum_i ||a_i||^2)`.
pub fn rms_rows(a: &[Vec<f64>]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    (a.iter().map(|r| norm_sq(r)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Empirical inner product `(1/n) sum_i <a_i, b_i>`.
pub fn mean_inner(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| dot(x, y)).sum::<f64>() / a.len() as f64
}

pub fn sub_rows(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter().zip(b).map(|(x, y)| sub(x, y)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rms_rows_matches_hand_sum() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 0.0], vec![1.0, 1.0]];
        assert!((rms_rows(&rows) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn axpy_and_dot() {
        assert_eq!(axpy(&[1.0, 2.0], 2.0, &[1.0, -1.0]), vec![3.0, 0.0]);
        assert_eq!(dot(&[1.0, 2.0], &[3.0, 4.0]), 11.0);
    }
}
