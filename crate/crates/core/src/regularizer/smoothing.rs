//! Group norm of feature fields and its Huber smoothing.

use super::conv::{ConvStack, FeatureTrace, Shape2};
use crate::error::{Error, Result};

/// Feature map `g(y)` with `sites` spatial positions and `channels` values per site.
/// Values are stored channel-major: channel `c` of site `i` is `values[c * sites + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureField {
    pub sites: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl FeatureField {
    pub fn zeros(sites: usize, channels: usize) -> Self {
        FeatureField {
            sites,
            channels,
            values: vec![0.0; sites * channels],
        }
    }

    /// Builds a field from per-site vectors (all the same length).
    pub fn from_sites(rows: &[Vec<f64>]) -> Self {
        let sites = rows.len();
        let channels = rows.first().map_or(0, |r| r.len());
        let mut values = vec![0.0; sites * channels];
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), channels, "ragged feature rows");
            for (c, &v) in r.iter().enumerate() {
                values[c * sites + i] = v;
            }
        }
        FeatureField {
            sites,
            channels,
            values,
        }
    }

    pub fn site(&self, i: usize) -> Vec<f64> {
        (0..self.channels).map(|c| self.values[c * self.sites + i]).collect()
    }

    pub fn site_norms(&self) -> Vec<f64> {
        let mut sq = vec![0.0; self.sites];
        for c in 0..self.channels {
            let chan = &self.values[c * self.sites..(c + 1) * self.sites];
            for (s, v) in sq.iter_mut().zip(chan) {
                *s += v * v;
            }
        }
        sq.into_iter().map(f64::sqrt).collect()
    }
}

/// Sum over sites of the Euclidean norm across channels.
pub fn l21_norm(field: &FeatureField) -> f64 {
    field.site_norms().into_iter().sum()
}

fn huber(norm: f64, eps: f64) -> f64 {
    // sites with norm exactly eps go to the quadratic branch; both branches agree there
    if norm <= eps {
        norm * norm / (2.0 * eps)
    } else {
        norm - 0.5 * eps
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("smoothing factor must be positive, got {eps}")))
    }
}

/// Counts of sites in the quadratic (`|g_i| <= eps`) and linear branches.
pub fn index_split(field: &FeatureField, eps: f64) -> (usize, usize) {
    let norms = field.site_norms();
    let inner = norms.iter().filter(|&&n| n <= eps).count();
    (inner, norms.len() - inner)
}

/// Huber-smoothed group norm of an already computed feature field.
pub fn smoothed_field_value(field: &FeatureField, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok(field.site_norms().into_iter().map(|n| huber(n, eps)).sum())
}

/// Derivative of the smoothed norm with respect to the field: `g_i / eps` on the quadratic
/// branch, `g_i / |g_i|` on the linear one.
pub fn smoothed_field_cotangent(field: &FeatureField, eps: f64) -> Result<FeatureField> {
    check_eps(eps)?;
    let norms = field.site_norms();
    let scale: Vec<f64> = norms
        .iter()
        .map(|&n| if n <= eps { 1.0 / eps } else { 1.0 / n })
        .collect();
    let mut out = field.clone();
    for c in 0..field.channels {
        let chan = &mut out.values[c * field.sites..(c + 1) * field.sites];
        for (v, s) in chan.iter_mut().zip(&scale) {
            *v *= s;
        }
    }
    Ok(out)
}

pub fn feature_forward(stack: &ConvStack, input: &[f64], shape: Shape2) -> Result<(FeatureField, FeatureTrace)> {
    let trace = stack.forward(input, shape)?;
    let field = FeatureField {
        sites: shape.sites(),
        channels: stack.feature_channels(),
        values: trace.output().to_vec(),
    };
    Ok((field, trace))
}

pub fn feature_vjp(stack: &ConvStack, trace: &FeatureTrace, cotangent: &FeatureField) -> Result<Vec<f64>> {
    if cotangent.sites != trace.shape.sites() || cotangent.channels != stack.feature_channels() {
        return Err(Error::input(format!(
            "cotangent is {}x{}, features are {}x{}",
            cotangent.sites,
            cotangent.channels,
            trace.shape.sites(),
            stack.feature_channels()
        )));
    }
    stack.vjp(trace, &cotangent.values)
}

/// `r_eps(y)`.
pub fn smoothed_value(stack: &ConvStack, input: &[f64], shape: Shape2, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let (field, _) = feature_forward(stack, input, shape)?;
    smoothed_field_value(&field, eps)
}

/// `grad r_eps(y)`.
pub fn smoothed_grad(stack: &ConvStack, input: &[f64], shape: Shape2, eps: f64) -> Result<Vec<f64>> {
    Ok(smoothed_value_and_grad(stack, input, shape, eps)?.1)
}

pub fn smoothed_value_and_grad(stack: &ConvStack, input: &[f64], shape: Shape2, eps: f64) -> Result<(f64, Vec<f64>)> {
    check_eps(eps)?;
    let (field, trace) = feature_forward(stack, input, shape)?;
    let value = smoothed_field_value(&field, eps)?;
    let cot = smoothed_field_cotangent(&field, eps)?;
    Ok((value, feature_vjp(stack, &trace, &cot)?))
}
