#![allow(dead_code)]

use lama_core::tomo::{BeamKind, GridSpec, ScanGeometry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| r.random_range(lo..hi)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let d: Vec<f64> = got.iter().zip(want).map(|(a, b)| a - b).collect();
    norm(&d) / norm(want).max(1e-300)
}

/// Chord length of the ray `o + t d`, `t` in `[t0, t1]`, through an axis-aligned box
/// (slab clipping of the parameter interval).
fn box_chord(o: [f64; 2], d: [f64; 2], mut t0: f64, mut t1: f64, lo: [f64; 2], hi: [f64; 2]) -> f64 {
    for a in 0..2 {
        if d[a] == 0.0 {
            if o[a] < lo[a] || o[a] > hi[a] {
                return 0.0;
            }
        } else {
            let (mut e, mut x) = ((lo[a] - o[a]) / d[a], (hi[a] - o[a]) / d[a]);
            if e > x {
                std::mem::swap(&mut e, &mut x);
            }
            t0 = t0.max(e);
            t1 = t1.min(x);
        }
    }
    let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
    (t1 - t0).max(0.0) * len
}

/// Central ray of a detector bin, derived from the geometry conventions (isocenter at the world
/// origin, independent of where the grid sits): parallel rays sit at
/// signed offset `u` along `(cos theta, sin theta)` and run along `(-sin theta, cos theta)`; fan
/// rays leave the source at `R (sin beta, -cos beta)` at fan angle `gamma`.
pub fn central_ray(geo: &ScanGeometry, view: usize, det: usize) -> ([f64; 2], [f64; 2], f64, f64) {
    let u = (det as f64 + 0.5 - geo.n_dets as f64 / 2.0) * geo.det_spacing;
    let th = geo.angles[view];
    match geo.kind {
        BeamKind::Parallel => ([u * th.cos(), u * th.sin()], [-th.sin(), th.cos()], -1e9, 1e9),
        BeamKind::FanEquiangular => {
            let r = geo.source_radius;
            let src = [r * th.sin(), -r * th.cos()];
            let a = th + u;
            (src, [-a.sin(), a.cos()], 0.0, geo.source_to_detector)
        }
    }
}

/// Dense system matrix (rows = view-major rays) by brute-force clipping of every ray against
/// every pixel square.
pub fn dense_oracle(geo: &ScanGeometry) -> Vec<Vec<f64>> {
    let g: GridSpec = geo.grid;
    let x0 = g.origin[0] - 0.5 * g.nx as f64 * g.pixel_size;
    let ytop = g.origin[1] + 0.5 * g.ny as f64 * g.pixel_size;
    let mut rows = Vec::new();
    for v in 0..geo.n_views_full {
        for d in 0..geo.n_dets {
            let (o, dir, t0, t1) = central_ray(geo, v, d);
            let mut row = vec![0.0; g.len()];
            for r in 0..g.ny {
                for c in 0..g.nx {
                    let lo = [x0 + c as f64 * g.pixel_size, ytop - (r + 1) as f64 * g.pixel_size];
                    let hi = [x0 + (c + 1) as f64 * g.pixel_size, ytop - r as f64 * g.pixel_size];
                    row[r * g.nx + c] = box_chord(o, dir, t0, t1, lo, hi);
                }
            }
            rows.push(row);
        }
    }
    rows
}

pub fn matvec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|r| dot(r, x)).collect()
}

pub fn matvec_t(m: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m[0].len()];
    for (r, &yi) in m.iter().zip(y) {
        for (o, &a) in out.iter_mut().zip(r) {
            *o += a * yi;
        }
    }
    out
}

pub fn parallel_geo(n: usize, views: usize, dets: usize) -> ScanGeometry {
    let grid = GridSpec::unit_square(n).unwrap();
    ScanGeometry::parallel(grid, views, dets, grid.pixel_size * 1.1).unwrap()
}

pub fn fan_geo(n: usize, views: usize, dets: usize) -> ScanGeometry {
    let grid = GridSpec::unit_square(n).unwrap();
    // fan wide enough to cover the unit square from radius 3
    let spacing = 2.0 * (1.5f64 / 3.0).asin() / dets as f64;
    ScanGeometry::fan(grid, views, dets, spacing, 3.0, 6.0).unwrap()
}
