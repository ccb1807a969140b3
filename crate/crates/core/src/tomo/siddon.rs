//! Exact ray/pixel intersection lengths by parametric plane crossing (Siddon traversal).

use super::geometry::{BeamKind, GridSpec, ScanGeometry};

/// A line `origin + t * dir` restricted to `t in [t_min, t_max]`; `dir` has unit length.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Ray {
    pub origin: [f64; 2],
    pub dir: [f64; 2],
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    pub(crate) fn for_bin(geo: &ScanGeometry, view: usize, det: usize, sub: usize) -> Ray {
        let angle = geo.angles[view];
        let u = geo.det_coord(det, sub);
        match geo.kind {
            BeamKind::Parallel => {
                let (s, c) = angle.sin_cos();
                Ray {
                    origin: [u * c, u * s],
                    dir: [-s, c],
                    t_min: f64::NEG_INFINITY,
                    t_max: f64::INFINITY,
                }
            }
            BeamKind::FanEquiangular => {
                let (s, c) = angle.sin_cos();
                let (sg, cg) = (angle + u).sin_cos();
                let r = geo.source_radius;
                Ray {
                    origin: [r * s, -r * c],
                    dir: [-sg, cg],
                    t_min: 0.0,
                    t_max: geo.source_to_detector,
                }
            }
        }
    }
}

// Direction components below this are treated as exactly axis-aligned.
const AXIS_SNAP: f64 = 1e-14;

/// Appends `(pixel index, weight * intersection length)` for every pixel the ray crosses.
///
/// Pixels are indexed row-major with row 0 at the top. Segments are assigned to the pixel
/// containing their midpoint, so a ray running exactly along a pixel edge is credited to the
/// pixel on the positive side of that edge.
pub(crate) fn trace(grid: &GridSpec, ray: &Ray, weight: f64, scratch: &mut Vec<f64>, out: &mut Vec<(u32, f64)>) {
    let ps = grid.pixel_size;
    let lo = grid.lower_corner();
    let hi = [lo[0] + grid.nx as f64 * ps, lo[1] + grid.ny as f64 * ps];
    let mut dir = ray.dir;
    for d in dir.iter_mut() {
        if d.abs() < AXIS_SNAP {
            *d = 0.0;
        }
    }

    let mut t_min = ray.t_min;
    let mut t_max = ray.t_max;
    for a in 0..2 {
        if dir[a] == 0.0 {
            if ray.origin[a] < lo[a] || ray.origin[a] >= hi[a] {
                return;
            }
        } else {
            let t1 = (lo[a] - ray.origin[a]) / dir[a];
            let t2 = (hi[a] - ray.origin[a]) / dir[a];
            t_min = t_min.max(t1.min(t2));
            t_max = t_max.min(t1.max(t2));
        }
    }
    if t_max.is_nan() || t_min.is_nan() || t_max <= t_min {
        return;
    }

    scratch.clear();
    scratch.push(t_min);
    let counts = [grid.nx, grid.ny];
    for a in 0..2 {
        if dir[a] == 0.0 {
            continue;
        }
        let p_a = ray.origin[a] + t_min * dir[a];
        let p_b = ray.origin[a] + t_max * dir[a];
        let (first, last) = (p_a.min(p_b), p_a.max(p_b));
        // interior planes strictly between the entry and exit coordinates
        let i0 = (((first - lo[a]) / ps).floor() as i64 + 1).max(1);
        let i1 = (((last - lo[a]) / ps).ceil() as i64 - 1).min(counts[a] as i64 - 1);
        for i in i0..=i1 {
            let plane = lo[a] + i as f64 * ps;
            let t = (plane - ray.origin[a]) / dir[a];
            if t > t_min && t < t_max {
                scratch.push(t);
            }
        }
    }
    scratch.push(t_max);
    scratch.sort_by(|a, b| a.total_cmp(b));

    for w in scratch.windows(2) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            continue;
        }
        let tm = 0.5 * (w[0] + w[1]);
        let mx = ray.origin[0] + tm * dir[0];
        let my = ray.origin[1] + tm * dir[1];
        let col = (((mx - lo[0]) / ps).floor() as i64).clamp(0, grid.nx as i64 - 1) as usize;
        let from_bottom = (((my - lo[1]) / ps).floor() as i64).clamp(0, grid.ny as i64 - 1) as usize;
        let row = grid.ny - 1 - from_bottom;
        out.push(((row * grid.nx + col) as u32, weight * len));
    }
}

/// All weighted pixel contributions of detector bin `(view, det)`, including sub-rays.
pub(crate) fn trace_bin(
    geo: &ScanGeometry,
    view: usize,
    det: usize,
    scratch: &mut Vec<f64>,
    out: &mut Vec<(u32, f64)>,
) {
    out.clear();
    let w = 1.0 / geo.rays_per_bin as f64;
    for sub in 0..geo.rays_per_bin {
        let ray = Ray::for_bin(geo, view, det, sub);
        trace(&geo.grid, &ray, w, scratch, out);
    }
}
