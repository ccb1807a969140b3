//! Image quality measures and the dual-domain reconstruction loss.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::objective::DualState;
use crate::tomo::{Image, Projector};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const DEFAULT_LOSS_WEIGHT: f64 = 0.01;

/// PSNR in dB, or the marker for identical inputs (serialized as `"inf"`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Identical,
}

impl Psnr {
    pub fn db(self) -> f64 {
        match self {
            Psnr::Finite(v) => v,
            Psnr::Identical => f64::INFINITY,
        }
    }
}

impl Serialize for Psnr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Psnr::Finite(v) => s.serialize_f64(*v),
            Psnr::Identical => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Psnr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Psnr::Finite(v)),
            Raw::Text(t) if t == "inf" => Ok(Psnr::Identical),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("unexpected psnr value {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr_db: Psnr,
    pub ssim: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    pub data_range: f64,
}

impl MetricReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn same_shape(test: &Image, reference: &Image) -> Result<()> {
    if test.grid.nx != reference.grid.nx
        || test.grid.ny != reference.grid.ny
        || test.values.len() != reference.values.len()
    {
        return Err(Error::input("images differ in shape"));
    }
    Ok(())
}

/// `max(ref) - min(ref)`.
pub fn default_data_range(reference: &Image) -> f64 {
    let (lo, hi) = reference
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    hi - lo
}

fn resolve_range(reference: &Image, data_range: Option<f64>) -> Result<f64> {
    let r = data_range.unwrap_or_else(|| default_data_range(reference));
    if r > 0.0 && r.is_finite() {
        Ok(r)
    } else {
        Err(Error::param(format!("data range must be positive, got {r}")))
    }
}

pub fn psnr(test: &Image, reference: &Image, data_range: Option<f64>) -> Result<Psnr> {
    same_shape(test, reference)?;
    if test.values == reference.values {
        return Ok(Psnr::Identical);
    }
    let range = resolve_range(reference, data_range)?;
    let mse = test
        .values
        .iter()
        .zip(&reference.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / test.values.len() as f64;
    if mse == 0.0 {
        return Ok(Psnr::Identical);
    }
    Ok(Psnr::Finite(10.0 * (range * range / mse).log10()))
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable weighted sum over every fully contained window.
fn filter_valid(src: &[f64], rows: usize, cols: usize, w: &[f64]) -> Vec<f64> {
    let k = w.len();
    let (or, oc) = (rows - k + 1, cols - k + 1);
    let mut tmp = vec![0.0; rows * oc];
    for r in 0..rows {
        for c in 0..oc {
            tmp[r * oc + c] = (0..k).map(|j| w[j] * src[r * cols + c + j]).sum();
        }
    }
    let mut out = vec![0.0; or * oc];
    for r in 0..or {
        for c in 0..oc {
            out[r * oc + c] = (0..k).map(|j| w[j] * tmp[(r + j) * oc + c]).sum();
        }
    }
    out
}

/// Mean SSIM over all valid 11x11 Gaussian-weighted windows of row-major planes.
pub fn ssim_plane(a: &[f64], b: &[f64], rows: usize, cols: usize, data_range: f64) -> Result<f64> {
    if a.len() != rows * cols || b.len() != rows * cols {
        return Err(Error::input("plane length does not match its shape"));
    }
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(Error::input(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels"
        )));
    }
    if !(data_range > 0.0 && data_range.is_finite()) {
        return Err(Error::param(format!("data range must be positive, got {data_range}")));
    }
    let w = gaussian_window();
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = filter_valid(a, rows, cols, &w);
    let mu_b = filter_valid(b, rows, cols, &w);
    let aa = filter_valid(&prod(a, a), rows, cols, &w);
    let bb = filter_valid(&prod(b, b), rows, cols, &w);
    let ab = filter_valid(&prod(a, b), rows, cols, &w);
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

pub fn ssim(test: &Image, reference: &Image, data_range: Option<f64>) -> Result<f64> {
    same_shape(test, reference)?;
    let range = resolve_range(reference, data_range)?;
    ssim_plane(&test.values, &reference.values, test.grid.ny, test.grid.nx, range)
}

/// `|x - x_true|^2 + |z - A x_true|^2 + mu (1 - SSIM(x, x_true))`, with the SSIM data range taken
/// from the truth (1 when the truth is constant).
pub fn evaluate_loss(recon: &DualState, truth: &Image, projector: &Projector, mu: f64) -> Result<f64> {
    same_shape(&recon.x, truth)?;
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::param(format!("loss weight must be nonnegative, got {mu}")));
    }
    let at = projector.forward(truth)?;
    if recon.z.values.len() != at.values.len() || !recon.z.is_full() {
        return Err(Error::input("sinogram does not match the projector"));
    }
    let img: f64 = recon
        .x
        .values
        .iter()
        .zip(&truth.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let sino: f64 = recon
        .z
        .values
        .iter()
        .zip(&at.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let structural = if mu > 0.0 {
        let range = default_data_range(truth);
        let range = if range > 0.0 { range } else { 1.0 };
        mu * (1.0 - ssim(&recon.x, truth, Some(range))?)
    } else {
        0.0
    };
    Ok(img + sino + structural)
}

/// PSNR and SSIM against a reference with one shared data range.
pub fn report(test: &Image, reference: &Image, data_range: Option<f64>) -> Result<MetricReport> {
    same_shape(test, reference)?;
    let identical = test.values == reference.values;
    let range = match resolve_range(reference, data_range) {
        Ok(r) => r,
        // a constant reference compared with itself still reports
        Err(_) if identical && data_range.is_none() => 1.0,
        Err(e) => return Err(e),
    };
    Ok(MetricReport {
        psnr_db: psnr(test, reference, Some(range))?,
        ssim: ssim(test, reference, Some(range))?,
        loss: None,
        data_range: range,
    })
}
