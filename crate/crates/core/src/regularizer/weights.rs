//! Weight provisioning (TV, seeded random) and the versioned binary weight file.
//!
//! File layout, all little-endian:
//!
//! ```text
//! magic      8 bytes  "LAMACONV"
//! version    u32      1
//! padding    u32      0 = zero, 1 = replicate
//! delta      f64      smoothed-ReLU half-width
//! layers     u32
//! per layer  4 x u32  out_channels, in_channels, kernel_h, kernel_w
//! weights    f64...   each layer in turn, (out, in, ky, kx) row-major
//! ```
//!
//! A JSON sidecar (`<file>.json`) lists the same shapes for humans; loading ignores it.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::conv::{ConvLayer, ConvStack, Padding};
use crate::error::{Error, Result};

pub const WEIGHT_MAGIC: &[u8; 8] = b"LAMACONV";
pub const WEIGHT_VERSION: u32 = 1;
pub const DEFAULT_ACTIVATION_DELTA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    Image,
    Sinogram,
}

impl Domain {
    /// Kernel shape used for this domain's networks: (3, 3) for images, (3, 15) for sinograms.
    pub fn kernel_shape(self) -> (usize, usize) {
        match self {
            Domain::Image => (3, 3),
            Domain::Sinogram => (3, 15),
        }
    }
}

/// Single linear layer computing `strength` times the forward-difference gradient
/// (channel 0 along columns, channel 1 along rows), with replicate padding so the
/// last difference on each axis is zero.
pub fn make_tv_weights(domain: Domain, strength: f64) -> ConvStack {
    let (kh, kw) = domain.kernel_shape();
    let (cy, cx) = (kh / 2, kw / 2);
    let mut layer = ConvLayer::zeros(2, 1, kh, kw);
    *layer.weight_mut(0, 0, cy, cx) = -strength;
    *layer.weight_mut(0, 0, cy, cx + 1) = strength;
    *layer.weight_mut(1, 0, cy, cx) = -strength;
    *layer.weight_mut(1, 0, cy + 1, cx) = strength;
    ConvStack {
        layers: vec![layer],
        activation_delta: DEFAULT_ACTIVATION_DELTA,
        padding: Padding::Replicate,
    }
}

/// Architecture of a randomly initialized stack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub layers: usize,
    pub channels: usize,
    pub kernel: (usize, usize),
    /// Multiplies the He-style standard deviation `sqrt(2 / fan_in)`.
    pub weight_scale: f64,
    pub activation_delta: f64,
}

impl ArchSpec {
    pub fn default_for(domain: Domain) -> Self {
        ArchSpec {
            layers: 3,
            channels: 16,
            kernel: domain.kernel_shape(),
            weight_scale: 1.0,
            activation_delta: DEFAULT_ACTIVATION_DELTA,
        }
    }
}

pub fn make_random_weights(seed: u64, spec: &ArchSpec) -> Result<ConvStack> {
    if spec.layers == 0 || spec.channels == 0 {
        return Err(Error::config("random stack needs at least one layer and channel"));
    }
    if !(spec.weight_scale >= 0.0 && spec.weight_scale.is_finite()) {
        return Err(Error::config("weight_scale must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (kh, kw) = spec.kernel;
    let mut layers = Vec::with_capacity(spec.layers);
    let mut in_ch = 1;
    for _ in 0..spec.layers {
        let mut layer = ConvLayer::zeros(spec.channels, in_ch, kh, kw);
        let std = spec.weight_scale * (2.0 / (in_ch * kh * kw) as f64).sqrt();
        let dist = Normal::new(0.0, std).map_err(|e| Error::config(e.to_string()))?;
        for w in layer.weights.iter_mut() {
            *w = dist.sample(&mut rng);
        }
        layers.push(layer);
        in_ch = spec.channels;
    }
    ConvStack::new(layers, spec.activation_delta, Padding::Zero)
}

pub fn weights_to_bytes(stack: &ConvStack) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHT_MAGIC);
    out.extend_from_slice(&WEIGHT_VERSION.to_le_bytes());
    let pad: u32 = match stack.padding {
        Padding::Zero => 0,
        Padding::Replicate => 1,
    };
    out.extend_from_slice(&pad.to_le_bytes());
    out.extend_from_slice(&stack.activation_delta.to_le_bytes());
    out.extend_from_slice(&(stack.layers.len() as u32).to_le_bytes());
    for l in &stack.layers {
        for d in [l.out_channels, l.in_channels, l.kernel_h, l.kernel_w] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for l in &stack.layers {
        for w in &l.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated while reading {what}"),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn weights_from_bytes(buf: &[u8]) -> Result<ConvStack> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8, "magic")? != WEIGHT_MAGIC {
        return Err(Error::format(0, "bad magic, not a weight file"));
    }
    let at = r.pos as u64;
    let version = r.u32("version")?;
    if version != WEIGHT_VERSION {
        return Err(Error::format(at, format!("unsupported version {version}")));
    }
    let at = r.pos as u64;
    let padding = match r.u32("padding")? {
        0 => Padding::Zero,
        1 => Padding::Replicate,
        p => return Err(Error::format(at, format!("unknown padding code {p}"))),
    };
    let delta = r.f64("activation delta")?;
    let at = r.pos as u64;
    let n_layers = r.u32("layer count")? as usize;
    if n_layers == 0 || n_layers > 1024 {
        return Err(Error::format(at, format!("implausible layer count {n_layers}")));
    }
    let mut dims = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let at = r.pos as u64;
        let d: Vec<usize> = (0..4)
            .map(|_| r.u32("layer dims").map(|v| v as usize))
            .collect::<Result<_>>()?;
        let count = d.iter().try_fold(1usize, |acc, &v| acc.checked_mul(v));
        match count {
            Some(c) if c > 0 && c <= buf.len() / 8 => dims.push((d, c)),
            _ => return Err(Error::format(at, "layer dimensions inconsistent with file size")),
        }
    }
    let mut layers = Vec::with_capacity(n_layers);
    for (d, count) in dims {
        let raw = r.take(count * 8, "weights")?;
        let weights = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        layers.push(ConvLayer {
            out_channels: d[0],
            in_channels: d[1],
            kernel_h: d[2],
            kernel_w: d[3],
            weights,
        });
    }
    if r.pos != buf.len() {
        return Err(Error::format(r.pos as u64, "trailing bytes after weights"));
    }
    let stack = ConvStack {
        layers,
        activation_delta: delta,
        padding,
    };
    stack.validate().map_err(|e| Error::format(0, e.to_string()))?;
    Ok(stack)
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightSidecar {
    format: String,
    version: u32,
    activation_delta: f64,
    padding: Padding,
    /// `[out_channels, in_channels, kernel_h, kernel_w]` per layer.
    layers: Vec<[usize; 4]>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_weights(path: &Path, stack: &ConvStack) -> Result<()> {
    stack.validate()?;
    fs::write(path, weights_to_bytes(stack))?;
    let meta = WeightSidecar {
        format: String::from_utf8_lossy(WEIGHT_MAGIC).into_owned(),
        version: WEIGHT_VERSION,
        activation_delta: stack.activation_delta,
        padding: stack.padding,
        layers: stack
            .layers
            .iter()
            .map(|l| [l.out_channels, l.in_channels, l.kernel_h, l.kernel_w])
            .collect(),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<ConvStack> {
    weights_from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tv_weights_shape() {
        let tv = make_tv_weights(Domain::Image, 1.0);
        assert_eq!(tv.depth(), 1);
        assert_eq!(tv.feature_channels(), 2);
        tv.validate().unwrap();
        let tvs = make_tv_weights(Domain::Sinogram, 2.0);
        assert_eq!((tvs.layers[0].kernel_h, tvs.layers[0].kernel_w), (3, 15));
    }

    #[test]
    fn random_weights_deterministic() {
        let spec = ArchSpec::default_for(Domain::Image);
        let a = make_random_weights(7, &spec).unwrap();
        let b = make_random_weights(7, &spec).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, make_random_weights(8, &spec).unwrap());
        assert_eq!(a.depth(), 3);
        assert_eq!(a.feature_channels(), 16);
    }

    #[test]
    fn byte_round_trip_is_exact() {
        let spec = ArchSpec::default_for(Domain::Sinogram);
        let s = make_random_weights(3, &spec).unwrap();
        assert_eq!(weights_from_bytes(&weights_to_bytes(&s)).unwrap(), s);
        let tv = make_tv_weights(Domain::Image, 0.3);
        assert_eq!(weights_from_bytes(&weights_to_bytes(&tv)).unwrap(), tv);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let s = make_random_weights(11, &ArchSpec::default_for(Domain::Image)).unwrap();
        save_weights(&path, &s).unwrap();
        assert_eq!(load_weights(&path).unwrap(), s);
        let meta: serde_json::Value = serde_json::from_slice(&fs::read(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(meta["layers"][1], serde_json::json!([16, 16, 3, 3]));
    }

    #[test]
    fn malformed_files_report_offsets() {
        let good = weights_to_bytes(&make_tv_weights(Domain::Image, 1.0));
        match weights_from_bytes(b"NOTAFILE") {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("{other:?}"),
        }
        let truncated = &good[..good.len() - 3];
        match weights_from_bytes(truncated) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 44),
            other => panic!("{other:?}"),
        }
        let mut bad_version = good.clone();
        bad_version[8] = 9;
        match weights_from_bytes(&bad_version) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 8),
            other => panic!("{other:?}"),
        }
        let mut trailing = good.clone();
        trailing.push(0);
        match weights_from_bytes(&trailing) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, good.len()),
            other => panic!("{other:?}"),
        }
    }
}
