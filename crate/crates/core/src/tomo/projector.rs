//! Ray-driven forward projector and its exact transpose.
//!
//! Both directions consume the same per-ray intersection weights, so the pair is matched
//! to round-off: `<A x, z> = <x, A^T z>`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::geometry::{Image, ScanGeometry, Sinogram};
use super::siddon::trace_bin;
use crate::error::{Error, Result};
use crate::linalg::{all_finite, power_iteration};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecMode {
    /// Fixed accumulation order; bit-reproducible.
    #[default]
    Sequential,
    /// Rays split across threads. Back projection sums per-thread partial images in a
    /// fixed chunk order, so results differ from sequential only by reassociation.
    Parallel,
}

// Above this many cached weights the projector traces rays on every call instead.
const MAX_CACHED_WEIGHTS: usize = 1 << 26;

#[derive(Debug, Clone)]
struct SystemMatrix {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

/// Forward/back projection operator bound to one geometry.
#[derive(Debug, Clone)]
pub struct Projector {
    geo: ScanGeometry,
    matrix: Option<SystemMatrix>,
    mode: ExecMode,
}

impl Projector {
    /// Builds the projector and caches the sparse system matrix when it fits in memory.
    pub fn new(geo: ScanGeometry) -> Result<Self> {
        geo.validate()?;
        let estimate = geo.n_rays() * geo.rays_per_bin * 2 * (geo.grid.nx + geo.grid.ny);
        let matrix = (estimate <= MAX_CACHED_WEIGHTS).then(|| build_matrix(&geo));
        Ok(Projector {
            geo,
            matrix,
            mode: ExecMode::Sequential,
        })
    }

    /// Projector that never caches weights.
    pub fn uncached(geo: ScanGeometry) -> Result<Self> {
        geo.validate()?;
        Ok(Projector {
            geo,
            matrix: None,
            mode: ExecMode::Sequential,
        })
    }

    pub fn with_mode(mut self, mode: ExecMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn mode(&self) -> ExecMode {
        self.mode
    }

    pub fn geometry(&self) -> &ScanGeometry {
        &self.geo
    }

    fn ray_weights<R>(&self, ray: usize, buf: &mut RayBuf, f: impl FnOnce(&[u32], &[f64]) -> R) -> R {
        match &self.matrix {
            Some(m) => {
                let span = m.row_ptr[ray]..m.row_ptr[ray + 1];
                f(&m.cols[span.clone()], &m.vals[span])
            }
            None => {
                let view = ray / self.geo.n_dets;
                let det = ray % self.geo.n_dets;
                trace_bin(&self.geo, view, det, &mut buf.scratch, &mut buf.hits);
                buf.cols.clear();
                buf.vals.clear();
                for &(c, v) in &buf.hits {
                    buf.cols.push(c);
                    buf.vals.push(v);
                }
                f(&buf.cols, &buf.vals)
            }
        }
    }

    /// Full-view forward projection of raw pixel values.
    pub fn forward_raw(&self, img: &[f64]) -> Vec<f64> {
        let n_dets = self.geo.n_dets;
        let mut out = vec![0.0; self.geo.n_rays()];
        let project_view = |(view, row): (usize, &mut [f64])| {
            let mut buf = RayBuf::default();
            for (det, slot) in row.iter_mut().enumerate() {
                *slot = self.ray_weights(view * n_dets + det, &mut buf, |cols, vals| {
                    cols.iter().zip(vals).map(|(&c, &w)| w * img[c as usize]).sum()
                });
            }
        };
        match self.mode {
            ExecMode::Sequential => out.chunks_mut(n_dets).enumerate().for_each(project_view),
            ExecMode::Parallel => out.par_chunks_mut(n_dets).enumerate().for_each(project_view),
        }
        out
    }

    /// Transpose applied to rows `values` that belong to the listed full-view indices.
    pub fn back_raw(&self, view_indices: &[usize], values: &[f64]) -> Vec<f64> {
        let n_dets = self.geo.n_dets;
        let n_pix = self.geo.grid.len();
        let accumulate = |img: &mut Vec<f64>, k: usize, buf: &mut RayBuf| {
            let view = view_indices[k];
            for det in 0..n_dets {
                let s = values[k * n_dets + det];
                if s == 0.0 {
                    continue;
                }
                self.ray_weights(view * n_dets + det, buf, |cols, vals| {
                    for (&c, &w) in cols.iter().zip(vals) {
                        img[c as usize] += w * s;
                    }
                });
            }
        };
        match self.mode {
            ExecMode::Sequential => {
                let mut img = vec![0.0; n_pix];
                let mut buf = RayBuf::default();
                for k in 0..view_indices.len() {
                    accumulate(&mut img, k, &mut buf);
                }
                img
            }
            ExecMode::Parallel => {
                let n_chunks = rayon::current_num_threads().clamp(1, view_indices.len().max(1));
                let per = view_indices.len().div_ceil(n_chunks).max(1);
                let partials: Vec<Vec<f64>> = (0..view_indices.len())
                    .step_by(per)
                    .collect::<Vec<_>>()
                    .into_par_iter()
                    .map(|start| {
                        let mut img = vec![0.0; n_pix];
                        let mut buf = RayBuf::default();
                        for k in start..(start + per).min(view_indices.len()) {
                            accumulate(&mut img, k, &mut buf);
                        }
                        img
                    })
                    .collect();
                let mut img = vec![0.0; n_pix];
                for p in partials {
                    for (a, b) in img.iter_mut().zip(p) {
                        *a += b;
                    }
                }
                img
            }
        }
    }

    pub fn forward(&self, img: &Image) -> Result<Sinogram> {
        if img.grid != self.geo.grid {
            return Err(Error::config("image grid does not match projector geometry"));
        }
        img.validate()?;
        Ok(Sinogram {
            n_views_full: self.geo.n_views_full,
            n_dets: self.geo.n_dets,
            view_indices: (0..self.geo.n_views_full).collect(),
            values: self.forward_raw(&img.values),
        })
    }

    /// Adjoint of [`forward`](Self::forward). Sparse sinograms act as if missing views were zero.
    pub fn back(&self, sino: &Sinogram) -> Result<Image> {
        sino.check_against(&self.geo)?;
        sino.validate()?;
        Ok(Image {
            grid: self.geo.grid,
            values: self.back_raw(&sino.view_indices, &sino.values),
        })
    }

    /// Power-iteration estimate of `||A||^2`, the largest eigenvalue of `A^T A`.
    pub fn norm_sq_estimate(&self, iters: usize) -> f64 {
        let all: Vec<usize> = (0..self.geo.n_views_full).collect();
        power_iteration(self.geo.grid.len(), iters, |v| {
            let p = self.forward_raw(v);
            self.back_raw(&all, &p)
        })
    }

    /// Explicit sparse rows as `(pixel, weight)` lists, for inspection and testing.
    pub fn ray_entries(&self, view: usize, det: usize) -> Vec<(u32, f64)> {
        let mut buf = RayBuf::default();
        self.ray_weights(view * self.geo.n_dets + det, &mut buf, |c, v| {
            c.iter().copied().zip(v.iter().copied()).collect()
        })
    }
}

#[derive(Default)]
struct RayBuf {
    scratch: Vec<f64>,
    hits: Vec<(u32, f64)>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

fn build_matrix(geo: &ScanGeometry) -> SystemMatrix {
    let per_view: Vec<Vec<Vec<(u32, f64)>>> = (0..geo.n_views_full)
        .into_par_iter()
        .map(|view| {
            let mut scratch = Vec::new();
            let mut hits = Vec::new();
            (0..geo.n_dets)
                .map(|det| {
                    trace_bin(geo, view, det, &mut scratch, &mut hits);
                    hits.clone()
                })
                .collect()
        })
        .collect();
    let mut row_ptr = Vec::with_capacity(geo.n_rays() + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    for rays in per_view {
        for hits in rays {
            for (c, v) in hits {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
    }
    SystemMatrix { row_ptr, cols, vals }
}

/// Full-view forward projection `A x`.
pub fn forward_project(img: &Image, geo: &ScanGeometry) -> Result<Sinogram> {
    if !all_finite(&img.values) {
        return Err(Error::input("image contains non-finite values"));
    }
    Projector::uncached(geo.clone())?.forward(img)
}

/// Transpose `A^T s` with exactly the forward weights.
pub fn back_project(sino: &Sinogram, geo: &ScanGeometry) -> Result<Image> {
    Projector::uncached(geo.clone())?.back(sino)
}
