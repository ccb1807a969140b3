//! Small dense-vector helpers shared by the operators and the solver.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// `y += a * x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Largest eigenvalue of a symmetric positive semidefinite operator by power iteration.
///
/// Starts from a fixed deterministic vector so repeated calls agree bit for bit.
/// Returns the final Rayleigh quotient.
pub fn power_iteration<F>(n: usize, iters: usize, mut apply: F) -> f64
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    if n == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_749_895).fract())
        .collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut lambda = 0.0;
    for _ in 0..iters.max(1) {
        let w = apply(&v);
        lambda = dot(&v, &w);
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        v = w.into_iter().map(|x| x / nw).collect();
    }
    lambda.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_iteration_diagonal() {
        let d = [1.0, 5.0, 2.0, 0.5];
        let l = power_iteration(4, 200, |v| v.iter().zip(&d).map(|(a, b)| a * b).collect());
        assert!((l - 5.0).abs() < 1e-9);
    }

    #[test]
    fn power_iteration_zero_operator() {
        assert_eq!(power_iteration(3, 10, |v| vec![0.0; v.len()]), 0.0);
    }
}
