//! Parallel-beam filtered back-projection.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::geometry::{BeamKind, Image, ScanGeometry, Sinogram};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterWindow {
    #[default]
    RamLak,
    Hann,
}

/// Frequency response of the band-limited ramp filter on a length-`len` periodic grid.
///
/// Built from the FFT of the spatial-domain ramp kernel (`1/4` at zero, `-1/(pi n)^2` at odd
/// taps), which avoids the DC offset of sampling `|f|` directly.
fn ramp_response(len: usize, window: FilterWindow) -> Vec<f64> {
    let mut kernel = vec![Complex::new(0.0, 0.0); len];
    kernel[0].re = 0.25;
    for n in (1..=len / 2).step_by(2) {
        let v = -1.0 / (PI * PI * (n * n) as f64);
        kernel[n].re = v;
        kernel[len - n].re = v;
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut kernel);
    kernel
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let f = k.min(len - k) as f64 / len as f64;
            let w = match window {
                FilterWindow::RamLak => 1.0,
                FilterWindow::Hann => 0.5 * (1.0 + (2.0 * PI * f).cos()),
            };
            c.re * w
        })
        .collect()
}

/// Angular quadrature weight of each view: half the span to its neighbors, periodic in pi.
fn angular_weights(angles: &[f64]) -> Vec<f64> {
    let n = angles.len();
    if n == 1 {
        return vec![PI];
    }
    (0..n)
        .map(|i| {
            let prev = if i == 0 { angles[n - 1] - PI } else { angles[i - 1] };
            let next = if i + 1 == n { angles[0] + PI } else { angles[i + 1] };
            0.5 * (next - prev)
        })
        .collect()
}

/// Ramp-filters every row (zero-padded to a power of two at least twice the detector count).
pub fn ramp_filter_rows(sino: &Sinogram, det_spacing: f64, window: FilterWindow) -> Vec<f64> {
    let nd = sino.n_dets;
    let len = (2 * nd).next_power_of_two();
    let response = ramp_response(len, window);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let scale = 1.0 / (len as f64 * det_spacing);
    let mut out = Vec::with_capacity(sino.values.len());
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    for k in 0..sino.n_views() {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (b, &v) in buf.iter_mut().zip(sino.row(k)) {
            b.re = v;
        }
        fwd.process(&mut buf);
        for (b, &h) in buf.iter_mut().zip(&response) {
            *b *= h;
        }
        inv.process(&mut buf);
        out.extend(buf[..nd].iter().map(|c| c.re * scale));
    }
    out
}

/// Filtered back-projection of a full- or sparse-view parallel-beam sinogram.
pub fn fbp_reconstruct(sino: &Sinogram, geo: &ScanGeometry, window: FilterWindow) -> Result<Image> {
    if geo.kind != BeamKind::Parallel {
        return Err(Error::UnsupportedGeometry(
            "filtered back-projection supports parallel beam only".into(),
        ));
    }
    sino.check_against(geo)?;
    sino.validate()?;
    let nd = sino.n_dets;
    let tau = geo.det_spacing;
    let filtered = ramp_filter_rows(sino, tau, window);
    let angles: Vec<f64> = sino.view_indices.iter().map(|&v| geo.angles[v]).collect();
    let weights = angular_weights(&angles);
    let trig: Vec<(f64, f64)> = angles.iter().map(|a| a.sin_cos()).collect();

    let grid = geo.grid;
    let mut img = Image::zeros(grid);
    let half = 0.5 * nd as f64 - 0.5;
    for row in 0..grid.ny {
        for col in 0..grid.nx {
            let [x, y] = grid.pixel_center(row, col);
            let mut acc = 0.0;
            for (k, &(s, c)) in trig.iter().enumerate() {
                let u = (x * c + y * s) / tau + half;
                let i0 = u.floor();
                let frac = u - i0;
                let i0 = i0 as i64;
                let q = &filtered[k * nd..(k + 1) * nd];
                let at = |i: i64| {
                    if i >= 0 && (i as usize) < nd {
                        q[i as usize]
                    } else {
                        0.0
                    }
                };
                acc += weights[k] * ((1.0 - frac) * at(i0) + frac * at(i0 + 1));
            }
            img.values[row * grid.nx + col] = acc;
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tomo::GridSpec;

    #[test]
    fn zero_sinogram_gives_zero_image() {
        let geo = ScanGeometry::parallel_covering(16, 20).unwrap();
        let img = fbp_reconstruct(&Sinogram::zeros_like_geometry(&geo), &geo, FilterWindow::RamLak).unwrap();
        assert!(img.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fan_beam_rejected() {
        let grid = GridSpec::unit_square(8).unwrap();
        let geo = ScanGeometry::fan(grid, 8, 12, 0.05, 4.0, 8.0).unwrap();
        let r = fbp_reconstruct(&Sinogram::zeros_like_geometry(&geo), &geo, FilterWindow::Hann);
        assert!(matches!(r, Err(Error::UnsupportedGeometry(_))));
    }

    #[test]
    fn uniform_weights_equal_pi_over_n() {
        let a: Vec<f64> = (0..6).map(|k| PI * k as f64 / 6.0).collect();
        for w in angular_weights(&a) {
            assert!((w - PI / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn ramp_response_dc_and_nyquist() {
        // DC gain of the band-limited ramp is 1/4 - 2 * sum 1/(pi n)^2 over odd n, close to 0
        let r = ramp_response(1024, FilterWindow::RamLak);
        assert!(r[0].abs() < 1e-3);
        // Nyquist gain approaches 1/2 (in units of 1/tau)
        assert!((r[512] - 0.5).abs() < 1e-3);
    }
}
