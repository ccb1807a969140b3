//! C^1 quadratic-spline smoothing of the ReLU.
//!
//! `a(t) = 0` for `t <= -d`, `(t + d)^2 / (4d)` for `|t| < d`, `t` for `t >= d`.

pub fn smoothed_relu(t: f64, delta: f64) -> f64 {
    if t <= -delta {
        0.0
    } else if t >= delta {
        t
    } else {
        (t + delta) * (t + delta) / (4.0 * delta)
    }
}

pub fn smoothed_relu_deriv(t: f64, delta: f64) -> f64 {
    if t <= -delta {
        0.0
    } else if t >= delta {
        1.0
    } else {
        (t + delta) / (2.0 * delta)
    }
}

/// Supremum of `|a''|`.
pub fn smoothed_relu_curvature(delta: f64) -> f64 {
    1.0 / (2.0 * delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn branch_values() {
        assert_eq!(smoothed_relu(1.0, 0.01), 1.0);
        assert_eq!(smoothed_relu(-1.0, 0.01), 0.0);
        assert_eq!(smoothed_relu(0.0, 0.01), 0.0025);
        assert_eq!(smoothed_relu_deriv(0.0, 0.01), 0.5);
    }

    #[test]
    fn continuous_at_knots() {
        let d = 0.3;
        for k in [-d, d] {
            let below = smoothed_relu(k - 1e-12, d);
            let above = smoothed_relu(k + 1e-12, d);
            assert!((below - above).abs() < 1e-11);
            let db = smoothed_relu_deriv(k - 1e-12, d);
            let da = smoothed_relu_deriv(k + 1e-12, d);
            assert!((db - da).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn monotone_convex_bounded_slope(t in -2.0f64..2.0, s in 0.0f64..1.0, d in 0.01f64..1.0) {
            let u = t + s;
            prop_assert!(smoothed_relu(u, d) >= smoothed_relu(t, d));
            let g = smoothed_relu_deriv(t, d);
            prop_assert!((0.0..=1.0).contains(&g));
            // convexity: tangent line lies below
            prop_assert!(smoothed_relu(u, d) + 1e-12 >= smoothed_relu(t, d) + g * s);
        }
    }
}
