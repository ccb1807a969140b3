//! Bias-free convolutional feature extractor and its reverse/forward-mode derivatives.
//!
//! Planes are stored channel-major: channel `c`, row `y`, column `x` lives at
//! `c * h * w + y * w + x`. Convolutions are stride-1 cross-correlations with "same" padding.

use serde::{Deserialize, Serialize};

use super::activation::{smoothed_relu, smoothed_relu_deriv};
use crate::error::{Error, Result};
use crate::linalg::all_finite;

/// Spatial size of a single-channel input plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape2 {
    pub height: usize,
    pub width: usize,
}

impl Shape2 {
    pub fn new(height: usize, width: usize) -> Self {
        Shape2 { height, width }
    }

    pub fn sites(&self) -> usize {
        self.height * self.width
    }
}

/// Boundary handling for "same" convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Padding {
    #[default]
    Zero,
    /// Out-of-range taps read the nearest edge sample.
    Replicate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    /// Row-major `(out, in, ky, kx)`.
    pub weights: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(out_channels: usize, in_channels: usize, kernel_h: usize, kernel_w: usize) -> Self {
        ConvLayer {
            out_channels,
            in_channels,
            kernel_h,
            kernel_w,
            weights: vec![0.0; out_channels * in_channels * kernel_h * kernel_w],
        }
    }

    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((o * self.in_channels + i) * self.kernel_h + ky) * self.kernel_w + kx]
    }

    pub fn weight_mut(&mut self, o: usize, i: usize, ky: usize, kx: usize) -> &mut f64 {
        &mut self.weights[((o * self.in_channels + i) * self.kernel_h + ky) * self.kernel_w + kx]
    }

    /// Upper bound on the operator 2-norm: sum over taps of the Frobenius norm of the
    /// channel-mixing matrix at that tap.
    pub fn norm_bound(&self) -> f64 {
        let mut total = 0.0;
        for ky in 0..self.kernel_h {
            for kx in 0..self.kernel_w {
                let mut fro = 0.0;
                for o in 0..self.out_channels {
                    for i in 0..self.in_channels {
                        fro += self.weight(o, i, ky, kx).powi(2);
                    }
                }
                total += fro.sqrt();
            }
        }
        total
    }

    /// `out += conv(input)` for planes of size `shape`.
    fn apply(&self, input: &[f64], out: &mut [f64], shape: Shape2, padding: Padding) {
        let n = shape.sites();
        let (ry, rx) = ((self.kernel_h / 2) as isize, (self.kernel_w / 2) as isize);
        for o in 0..self.out_channels {
            let dst = &mut out[o * n..(o + 1) * n];
            for i in 0..self.in_channels {
                let src = &input[i * n..(i + 1) * n];
                for ky in 0..self.kernel_h {
                    for kx in 0..self.kernel_w {
                        let w = self.weight(o, i, ky, kx);
                        if w == 0.0 {
                            continue;
                        }
                        shift_add(dst, src, shape, ky as isize - ry, kx as isize - rx, w, padding);
                    }
                }
            }
        }
    }

    /// `grad_in += conv^T(grad_out)`.
    fn apply_transpose(&self, grad_out: &[f64], grad_in: &mut [f64], shape: Shape2, padding: Padding) {
        let n = shape.sites();
        let (ry, rx) = ((self.kernel_h / 2) as isize, (self.kernel_w / 2) as isize);
        for o in 0..self.out_channels {
            let src = &grad_out[o * n..(o + 1) * n];
            for i in 0..self.in_channels {
                let dst = &mut grad_in[i * n..(i + 1) * n];
                for ky in 0..self.kernel_h {
                    for kx in 0..self.kernel_w {
                        let w = self.weight(o, i, ky, kx);
                        if w == 0.0 {
                            continue;
                        }
                        shift_add_transpose(dst, src, shape, ky as isize - ry, kx as isize - rx, w, padding);
                    }
                }
            }
        }
    }
}

/// Source row for output row `y` under a vertical shift, or `None` if it falls in zero padding.
fn source_row(y: usize, dy: isize, h: usize, padding: Padding) -> Option<usize> {
    let sy = y as isize + dy;
    match padding {
        Padding::Zero => (0..h as isize).contains(&sy).then_some(sy as usize),
        Padding::Replicate => Some(sy.clamp(0, h as isize - 1) as usize),
    }
}

/// Columns `x0..x1` read in-range sources `x + dx`; the rest read padding.
fn interior_cols(w: usize, dx: isize) -> (usize, usize) {
    let x0 = (-dx).clamp(0, w as isize) as usize;
    let x1 = (w as isize - dx).clamp(0, w as isize) as usize;
    (x0, x1.max(x0))
}

// dst[y, x] += wt * src[y + dy, x + dx]
fn shift_add(dst: &mut [f64], src: &[f64], shape: Shape2, dy: isize, dx: isize, wt: f64, padding: Padding) {
    let (h, w) = (shape.height, shape.width);
    let (x0, x1) = interior_cols(w, dx);
    for y in 0..h {
        let Some(sy) = source_row(y, dy, h, padding) else {
            continue;
        };
        let srow = &src[sy * w..(sy + 1) * w];
        let drow = &mut dst[y * w..(y + 1) * w];
        for x in x0..x1 {
            drow[x] += wt * srow[(x as isize + dx) as usize];
        }
        if padding == Padding::Replicate {
            for d in &mut drow[..x0] {
                *d += wt * srow[0];
            }
            for d in &mut drow[x1..] {
                *d += wt * srow[w - 1];
            }
        }
    }
}

// src-side accumulation of shift_add: dst[y + dy, x + dx] += wt * src[y, x]
fn shift_add_transpose(dst: &mut [f64], src: &[f64], shape: Shape2, dy: isize, dx: isize, wt: f64, padding: Padding) {
    let (h, w) = (shape.height, shape.width);
    let (x0, x1) = interior_cols(w, dx);
    for y in 0..h {
        let Some(sy) = source_row(y, dy, h, padding) else {
            continue;
        };
        let grow = &src[y * w..(y + 1) * w];
        let drow = &mut dst[sy * w..(sy + 1) * w];
        for x in x0..x1 {
            drow[(x as isize + dx) as usize] += wt * grow[x];
        }
        if padding == Padding::Replicate {
            for g in &grow[..x0] {
                drow[0] += wt * g;
            }
            for g in &grow[x1..] {
                drow[w - 1] += wt * g;
            }
        }
    }
}

/// Feature extractor `g(y) = w_l * a(... a(w_1 * y))`: convolutions separated by smoothed
/// ReLUs, with no activation after the last layer and no bias terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvStack {
    pub layers: Vec<ConvLayer>,
    pub activation_delta: f64,
    pub padding: Padding,
}

impl ConvStack {
    pub fn new(layers: Vec<ConvLayer>, activation_delta: f64, padding: Padding) -> Result<Self> {
        let s = ConvStack {
            layers,
            activation_delta,
            padding,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::config("conv stack needs at least one layer"));
        }
        if !(self.activation_delta > 0.0 && self.activation_delta.is_finite()) {
            return Err(Error::config("activation_delta must be positive"));
        }
        let mut channels = 1;
        for (k, l) in self.layers.iter().enumerate() {
            if l.in_channels != channels {
                return Err(Error::config(format!(
                    "layer {k} expects {} input channels, previous layer gives {channels}",
                    l.in_channels
                )));
            }
            if l.out_channels == 0 {
                return Err(Error::config(format!("layer {k} has no output channels")));
            }
            if l.kernel_h % 2 == 0 || l.kernel_w % 2 == 0 {
                return Err(Error::config(format!(
                    "layer {k} kernel {}x{} must have odd dimensions",
                    l.kernel_h, l.kernel_w
                )));
            }
            if l.weights.len() != l.out_channels * l.in_channels * l.kernel_h * l.kernel_w {
                return Err(Error::config(format!("layer {k} weight count mismatch")));
            }
            if !all_finite(&l.weights) {
                return Err(Error::config(format!("layer {k} has non-finite weights")));
            }
            channels = l.out_channels;
        }
        Ok(())
    }

    /// Output channel count `d_r`.
    pub fn feature_channels(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_channels)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn is_linear(&self) -> bool {
        self.layers.len() == 1
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().any(|l| l.weights.iter().all(|&w| w == 0.0))
    }

    pub fn forward(&self, input: &[f64], shape: Shape2) -> Result<FeatureTrace> {
        if input.len() != shape.sites() {
            return Err(Error::input(format!(
                "input has {} samples, shape needs {}",
                input.len(),
                shape.sites()
            )));
        }
        let n = shape.sites();
        let mut activations = vec![input.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.out_channels * n];
            layer.apply(&activations[k], &mut z, shape, self.padding);
            if k + 1 < self.layers.len() {
                activations.push(z.iter().map(|&t| smoothed_relu(t, self.activation_delta)).collect());
            }
            pre.push(z);
        }
        Ok(FeatureTrace {
            shape,
            activations,
            pre_activations: pre,
        })
    }

    /// Jacobian-transpose of the forward map at the traced point applied to `cotangent`.
    pub fn vjp(&self, trace: &FeatureTrace, cotangent: &[f64]) -> Result<Vec<f64>> {
        let shape = trace.shape;
        let n = shape.sites();
        if cotangent.len() != self.feature_channels() * n {
            return Err(Error::input("cotangent shape does not match feature field"));
        }
        let mut grad = cotangent.to_vec();
        for k in (0..self.layers.len()).rev() {
            if k + 1 < self.layers.len() {
                for (g, &z) in grad.iter_mut().zip(&trace.pre_activations[k]) {
                    *g *= smoothed_relu_deriv(z, self.activation_delta);
                }
            }
            let layer = &self.layers[k];
            let mut below = vec![0.0; layer.in_channels * n];
            layer.apply_transpose(&grad, &mut below, shape, self.padding);
            grad = below;
        }
        Ok(grad)
    }

    /// Jacobian of the forward map at the traced point applied to `tangent`.
    pub fn jvp(&self, trace: &FeatureTrace, tangent: &[f64]) -> Result<Vec<f64>> {
        let shape = trace.shape;
        let n = shape.sites();
        if tangent.len() != n {
            return Err(Error::input("tangent shape does not match input"));
        }
        let mut t = tangent.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.out_channels * n];
            layer.apply(&t, &mut z, shape, self.padding);
            if k + 1 < self.layers.len() {
                for (v, &p) in z.iter_mut().zip(&trace.pre_activations[k]) {
                    *v *= smoothed_relu_deriv(p, self.activation_delta);
                }
            }
            t = z;
        }
        Ok(t)
    }
}

/// Intermediates of one forward pass, reused by the reverse and forward-mode passes.
#[derive(Debug, Clone)]
pub struct FeatureTrace {
    pub shape: Shape2,
    /// Input to each layer; entry 0 is the network input.
    pub activations: Vec<Vec<f64>>,
    /// Output of each convolution before the activation.
    pub pre_activations: Vec<Vec<f64>>,
}

impl FeatureTrace {
    pub fn output(&self) -> &[f64] {
        self.pre_activations.last().map_or(&[], |v| v.as_slice())
    }
}
