//! Sampled Lipschitz estimate for the gradient of the smoothed regularizer.
//!
//! Uses the bound `sqrt(m) * L_g + M^2 / eps`, where `M` bounds the Jacobian norm of the
//! feature map and `L_g` its Lipschitz constant. `M` is estimated by power iteration on
//! `J^T J` at a random probe, so it is a sampled value rather than a global supremum.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::activation::smoothed_relu_curvature;
use super::conv::{ConvStack, Shape2};
use crate::error::{Error, Result};
use crate::linalg::power_iteration;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzOptions {
    pub power_iters: usize,
    pub probe_seed: u64,
    /// Overrides the default curvature constant `L_g`.
    pub curvature: Option<f64>,
}

impl Default for LipschitzOptions {
    fn default() -> Self {
        LipschitzOptions {
            power_iters: 50,
            probe_seed: 0x5eed,
            curvature: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzEstimate {
    /// `M^2`, the squared spectral norm of the feature Jacobian at the probe.
    pub jacobian_norm_sq: f64,
    pub curvature: f64,
    pub sites: usize,
}

impl LipschitzEstimate {
    pub fn at(&self, eps: f64) -> f64 {
        let spread = if self.jacobian_norm_sq == 0.0 {
            0.0
        } else {
            self.jacobian_norm_sq / eps
        };
        (self.sites as f64).sqrt() * self.curvature + spread
    }
}

/// Default curvature constant: `max |a''|` times the product of layer norm bounds; zero for a
/// single (linear) layer.
pub fn default_curvature(stack: &ConvStack) -> f64 {
    if stack.is_linear() {
        return 0.0;
    }
    smoothed_relu_curvature(stack.activation_delta) * stack.layers.iter().map(|l| l.norm_bound()).product::<f64>()
}

/// The ε-independent parts of the estimate; evaluate at any ε with [`LipschitzEstimate::at`].
pub fn lipschitz_parts(stack: &ConvStack, shape: Shape2, opts: &LipschitzOptions) -> Result<LipschitzEstimate> {
    let n = shape.sites();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.probe_seed);
    let probe: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let trace = stack.forward(&probe, shape)?;
    let iters = opts.power_iters.max(30);
    let jacobian_norm_sq = power_iteration(n, iters, |v| {
        let jv = stack.jvp(&trace, v).expect("tangent has input shape");
        stack.vjp(&trace, &jv).expect("cotangent has output shape")
    });
    Ok(LipschitzEstimate {
        jacobian_norm_sq,
        curvature: opts.curvature.unwrap_or_else(|| default_curvature(stack)),
        sites: n,
    })
}

/// `L_hat(eps) = sqrt(m) * L_g + M^2 / eps`.
pub fn lipschitz_estimate(stack: &ConvStack, eps: f64, shape: Shape2, opts: &LipschitzOptions) -> Result<f64> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::param(format!("smoothing factor must be positive, got {eps}")));
    }
    Ok(lipschitz_parts(stack, shape, opts)?.at(eps))
}
