//! View selection and its transpose, plus linear view interpolation.

use super::geometry::{Sinogram, ViewMask};
use crate::error::{Error, Result};

/// Restricts a full-view sinogram to the views in `mask`.
pub fn subsample_views(sino: &Sinogram, mask: &ViewMask) -> Result<Sinogram> {
    mask.validate()?;
    if !sino.is_full() {
        return Err(Error::input("subsample_views expects a full-view sinogram"));
    }
    if mask.n_views_full != sino.n_views_full {
        return Err(Error::input(format!(
            "mask covers {} views, sinogram has {}",
            mask.n_views_full, sino.n_views_full
        )));
    }
    let mut values = Vec::with_capacity(mask.len() * sino.n_dets);
    for &v in &mask.selected {
        values.extend_from_slice(sino.row(v));
    }
    Ok(Sinogram {
        n_views_full: sino.n_views_full,
        n_dets: sino.n_dets,
        view_indices: mask.selected.clone(),
        values,
    })
}

/// Transpose of view selection: places each stored row at its full-view index, zeros elsewhere.
pub fn zero_fill(sino: &Sinogram) -> Sinogram {
    let mut out = Sinogram::zeros_full(sino.n_views_full, sino.n_dets);
    for (k, &v) in sino.view_indices.iter().enumerate() {
        out.values[v * sino.n_dets..(v + 1) * sino.n_dets].copy_from_slice(sino.row(k));
    }
    out
}

/// Fills every full view by linear interpolation along the view axis, per detector bin.
///
/// The view axis is treated as periodic: views after the last retained one interpolate
/// toward the first retained view shifted by `n_views_full`. Retained rows are copied as is.
pub fn upsample_sinogram_linear(sparse: &Sinogram, n_views_full: usize) -> Result<Sinogram> {
    sparse.validate()?;
    if sparse.n_views() < 2 {
        return Err(Error::input("interpolation needs at least two views"));
    }
    if n_views_full != sparse.n_views_full {
        return Err(Error::input(format!(
            "sinogram belongs to a {}-view acquisition, not {n_views_full}",
            sparse.n_views_full
        )));
    }
    let nd = sparse.n_dets;
    let idx = &sparse.view_indices;
    let n = idx.len();
    let mut out = Sinogram::zeros_full(n_views_full, nd);
    for k in 0..n {
        let left = idx[k];
        let (right, right_row) = if k + 1 < n {
            (idx[k + 1], k + 1)
        } else {
            // views before the first retained one belong to this wrap-around segment
            (idx[0] + n_views_full, 0)
        };
        let a = sparse.row(k);
        let b = sparse.row(right_row);
        let gap = (right - left) as f64;
        for v in left..right {
            let full = v % n_views_full;
            let row = &mut out.values[full * nd..(full + 1) * nd];
            if v == left {
                row.copy_from_slice(a);
                continue;
            }
            let t = (v - left) as f64 / gap;
            for ((o, &x), &y) in row.iter_mut().zip(a).zip(b) {
                *o = x + t * (y - x);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full(n_views: usize, n_dets: usize, f: impl Fn(usize, usize) -> f64) -> Sinogram {
        let mut s = Sinogram::zeros_full(n_views, n_dets);
        for v in 0..n_views {
            for d in 0..n_dets {
                s.values[v * n_dets + d] = f(v, d);
            }
        }
        s
    }

    #[test]
    fn identity_mask_is_noop() {
        let s = full(5, 3, |v, d| (v * 3 + d) as f64);
        let m = ViewMask::identity(5);
        assert_eq!(subsample_views(&s, &m).unwrap(), s);
    }

    #[test]
    fn select_zero_fill_select_is_idempotent() {
        let s = full(8, 2, |v, d| (v * 10 + d) as f64 + 0.5);
        let m = ViewMask::uniform(8, 4).unwrap();
        let once = subsample_views(&s, &m).unwrap();
        let twice = subsample_views(&zero_fill(&once), &m).unwrap();
        assert_eq!(once, twice);
        let z = zero_fill(&once);
        assert_eq!(z.row(1), &[0.0, 0.0]);
        assert_eq!(z.row(2), s.row(2));
    }

    #[test]
    fn subsample_rejects_foreign_mask() {
        let s = full(8, 2, |_, _| 1.0);
        let m = ViewMask::uniform(16, 4).unwrap();
        assert!(subsample_views(&s, &m).is_err());
    }

    #[test]
    fn constant_stays_constant() {
        let s = full(12, 4, |_, _| 3.0);
        let sparse = subsample_views(&s, &ViewMask::uniform(12, 4).unwrap()).unwrap();
        let up = upsample_sinogram_linear(&sparse, 12).unwrap();
        assert!(up.values.iter().all(|&v| v == 3.0));
    }

    #[test]
    fn midpoint_interpolation() {
        let sparse = Sinogram::new(4, 1, vec![0, 2], vec![0.0, 4.0]).unwrap();
        let up = upsample_sinogram_linear(&sparse, 4).unwrap();
        assert_eq!(up.values, vec![0.0, 2.0, 4.0, 2.0]);
    }

    #[test]
    fn wraps_before_first_view() {
        let sparse = Sinogram::new(6, 1, vec![2, 4], vec![1.0, 3.0]).unwrap();
        let up = upsample_sinogram_linear(&sparse, 6).unwrap();
        // segment 4 -> 8 (== 2): 3, 2.5, 2, 1.5
        assert_eq!(up.values, vec![2.0, 1.5, 1.0, 2.0, 3.0, 2.5]);
    }

    #[test]
    fn anchors_reproduced_exactly() {
        let s = full(30, 5, |v, d| ((v * 7 + d * 3) % 11) as f64 * 0.37);
        let m = ViewMask::uniform(30, 6).unwrap();
        let sparse = subsample_views(&s, &m).unwrap();
        let up = upsample_sinogram_linear(&sparse, 30).unwrap();
        for &v in &m.selected {
            assert_eq!(up.row(v), s.row(v));
        }
    }

    #[test]
    fn needs_two_views() {
        let sparse = Sinogram::new(4, 1, vec![1], vec![1.0]).unwrap();
        assert!(upsample_sinogram_linear(&sparse, 4).is_err());
    }
}
