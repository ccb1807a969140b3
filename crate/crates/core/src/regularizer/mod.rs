//! Learnable composite regularizer `r(y) = || g(y) ||_{2,1}` and its Huber smoothing.

mod activation;
mod conv;
mod lipschitz;
mod smoothing;
mod weights;

pub use activation::{smoothed_relu, smoothed_relu_curvature, smoothed_relu_deriv};
pub use conv::{ConvLayer, ConvStack, FeatureTrace, Padding, Shape2};
pub use lipschitz::{default_curvature, lipschitz_estimate, lipschitz_parts, LipschitzEstimate, LipschitzOptions};
pub use smoothing::{
    feature_forward, feature_vjp, index_split, l21_norm, smoothed_field_cotangent, smoothed_field_value, smoothed_grad,
    smoothed_value, smoothed_value_and_grad, FeatureField,
};
pub use weights::{
    load_weights, make_random_weights, make_tv_weights, save_weights, sidecar_path, weights_from_bytes,
    weights_to_bytes, ArchSpec, Domain, DEFAULT_ACTIVATION_DELTA, WEIGHT_MAGIC, WEIGHT_VERSION,
};

use crate::error::{Error, Result};

/// A conv stack bound to the plane shape of one domain (image grid or full-view sinogram).
#[derive(Debug, Clone)]
pub struct DomainRegularizer {
    pub stack: ConvStack,
    pub shape: Shape2,
}

impl DomainRegularizer {
    pub fn new(stack: ConvStack, shape: Shape2) -> Result<Self> {
        stack.validate()?;
        if shape.sites() == 0 {
            return Err(Error::config("regularizer plane is empty"));
        }
        Ok(DomainRegularizer { stack, shape })
    }

    pub fn sites(&self) -> usize {
        self.shape.sites()
    }

    pub fn features(&self, y: &[f64]) -> Result<FeatureField> {
        Ok(feature_forward(&self.stack, y, self.shape)?.0)
    }

    /// Unsmoothed `||g(y)||_{2,1}`.
    pub fn norm(&self, y: &[f64]) -> Result<f64> {
        Ok(l21_norm(&self.features(y)?))
    }

    pub fn value(&self, y: &[f64], eps: f64) -> Result<f64> {
        smoothed_value(&self.stack, y, self.shape, eps)
    }

    pub fn grad(&self, y: &[f64], eps: f64) -> Result<Vec<f64>> {
        smoothed_grad(&self.stack, y, self.shape, eps)
    }

    pub fn value_and_grad(&self, y: &[f64], eps: f64) -> Result<(f64, Vec<f64>)> {
        smoothed_value_and_grad(&self.stack, y, self.shape, eps)
    }

    pub fn lipschitz(&self, opts: &LipschitzOptions) -> Result<LipschitzEstimate> {
        lipschitz_parts(&self.stack, self.shape, opts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tv_features_are_forward_differences() {
        let shape = Shape2::new(3, 4);
        let y: Vec<f64> = (0..12).map(|i| (i * i) as f64).collect();
        let (f, _) = feature_forward(&make_tv_weights(Domain::Image, 1.0), &y, shape).unwrap();
        for r in 0..3 {
            for c in 0..4 {
                let i = r * 4 + c;
                let dx = if c + 1 < 4 { y[i + 1] - y[i] } else { 0.0 };
                let dy = if r + 1 < 3 { y[i + 4] - y[i] } else { 0.0 };
                assert_eq!(f.site(i), vec![dx, dy]);
            }
        }
    }

    #[test]
    fn constant_input_tv_is_zero() {
        let shape = Shape2::new(5, 6);
        let y = vec![2.5; 30];
        for domain in [Domain::Image, Domain::Sinogram] {
            let tv = make_tv_weights(domain, 1.0);
            let (f, _) = feature_forward(&tv, &y, shape).unwrap();
            assert!(f.values.iter().all(|&v| v == 0.0));
            let g = smoothed_grad(&tv, &y, shape, 0.1).unwrap();
            assert!(g.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn tv_vjp_is_negative_divergence() {
        let shape = Shape2::new(4, 5);
        let tv = make_tv_weights(Domain::Image, 1.0);
        let y = vec![0.0; 20];
        let (_, trace) = feature_forward(&tv, &y, shape).unwrap();
        let p: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![(i % 3) as f64 - 1.0, (i % 5) as f64 * 0.5])
            .collect();
        let cot = FeatureField::from_sites(&p);
        let out = feature_vjp(&tv, &trace, &cot).unwrap();
        // Neumann discrete divergence: the adjoint of forward differences whose last entry is zero
        for r in 0..4 {
            for c in 0..5 {
                let i = r * 5 + c;
                let px = |c: usize, i: usize| if c < 4 { p[i][0] } else { 0.0 };
                let py = |r: usize, i: usize| if r < 3 { p[i][1] } else { 0.0 };
                let mut div = px(c, i) + py(r, i);
                if c > 0 {
                    div -= px(c - 1, i - 1);
                }
                if r > 0 {
                    div -= py(r - 1, i - 5);
                }
                assert!((out[i] + div).abs() < 1e-14, "site {i}");
            }
        }
    }

    #[test]
    fn zero_cotangent_gives_zero() {
        let shape = Shape2::new(6, 6);
        let stack = make_random_weights(1, &ArchSpec::default_for(Domain::Image)).unwrap();
        let y: Vec<f64> = (0..36).map(|i| (i as f64).sin()).collect();
        let (_, trace) = feature_forward(&stack, &y, shape).unwrap();
        let out = feature_vjp(&stack, &trace, &FeatureField::zeros(36, 16)).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        assert!(feature_vjp(&stack, &trace, &FeatureField::zeros(36, 2)).is_err());
    }

    #[test]
    fn lipschitz_monotone_in_eps_and_linear_has_no_curvature() {
        let shape = Shape2::new(8, 8);
        let opts = LipschitzOptions::default();
        let tv = make_tv_weights(Domain::Image, 1.0);
        assert_eq!(default_curvature(&tv), 0.0);
        let parts = lipschitz_parts(&tv, shape, &opts).unwrap();
        assert_eq!(parts.curvature, 0.0);
        assert!(parts.at(0.05) > parts.at(0.1));
        let rnd = make_random_weights(2, &ArchSpec::default_for(Domain::Image)).unwrap();
        let l1 = lipschitz_estimate(&rnd, 0.1, shape, &opts).unwrap();
        let l2 = lipschitz_estimate(&rnd, 0.05, shape, &opts).unwrap();
        assert!(l2 > l1);
        assert!(lipschitz_estimate(&rnd, 0.0, shape, &opts).is_err());
    }
}
