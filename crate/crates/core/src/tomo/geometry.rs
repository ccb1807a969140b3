use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::all_finite;

/// Regular 2-D pixel grid. Row 0 is the top row (largest y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub pixel_size: f64,
    /// Physical position of the grid center.
    #[serde(default)]
    pub origin: [f64; 2],
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, pixel_size: f64) -> Result<Self> {
        let g = GridSpec {
            nx,
            ny,
            pixel_size,
            origin: [0.0, 0.0],
        };
        g.validate()?;
        Ok(g)
    }

    /// Square `n x n` grid covering the physical square `[-1, 1]^2`.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, 2.0 / n as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::config("grid must have at least one pixel per axis"));
        }
        if !(self.pixel_size > 0.0 && self.pixel_size.is_finite()) {
            return Err(Error::config(format!(
                "pixel_size must be positive, got {}",
                self.pixel_size
            )));
        }
        if !all_finite(&self.origin) {
            return Err(Error::config("grid origin must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Physical x of the left edge and y of the bottom edge.
    pub fn lower_corner(&self) -> [f64; 2] {
        [
            self.origin[0] - 0.5 * self.nx as f64 * self.pixel_size,
            self.origin[1] - 0.5 * self.ny as f64 * self.pixel_size,
        ]
    }

    /// Physical center of pixel (row, col).
    pub fn pixel_center(&self, row: usize, col: usize) -> [f64; 2] {
        let [x0, y0] = self.lower_corner();
        [
            x0 + (col as f64 + 0.5) * self.pixel_size,
            y0 + ((self.ny - row) as f64 - 0.5) * self.pixel_size,
        ]
    }

    /// Half of the shorter side of the field of view.
    pub fn half_extent(&self) -> f64 {
        0.5 * self.nx.min(self.ny) as f64 * self.pixel_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeamKind {
    Parallel,
    /// Equiangular fan with the detector arc centered on the source.
    FanEquiangular,
}

/// Acquisition geometry. Parallel beam covers `[0, pi)`, fan beam `[0, 2 pi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScanGeometryRaw")]
pub struct ScanGeometry {
    pub kind: BeamKind,
    pub n_views_full: usize,
    pub angles: Vec<f64>,
    pub n_dets: usize,
    /// Detector pitch: a length for parallel beam, an angle (radians) for fan beam.
    pub det_spacing: f64,
    pub source_radius: f64,
    pub source_to_detector: f64,
    /// Rays traced per detector bin; each sub-ray carries weight `1 / rays_per_bin`.
    pub rays_per_bin: usize,
    pub grid: GridSpec,
}

#[derive(Deserialize)]
struct ScanGeometryRaw {
    kind: BeamKind,
    n_views_full: usize,
    #[serde(default)]
    angles: Vec<f64>,
    n_dets: usize,
    det_spacing: f64,
    #[serde(default)]
    source_radius: f64,
    #[serde(default)]
    source_to_detector: f64,
    #[serde(default = "one")]
    rays_per_bin: usize,
    grid: GridSpec,
}

fn one() -> usize {
    1
}

impl TryFrom<ScanGeometryRaw> for ScanGeometry {
    type Error = Error;

    fn try_from(r: ScanGeometryRaw) -> Result<Self> {
        let angles = if r.angles.is_empty() {
            even_angles(r.kind, r.n_views_full)
        } else {
            r.angles
        };
        let g = ScanGeometry {
            kind: r.kind,
            n_views_full: r.n_views_full,
            angles,
            n_dets: r.n_dets,
            det_spacing: r.det_spacing,
            source_radius: r.source_radius,
            source_to_detector: r.source_to_detector,
            rays_per_bin: r.rays_per_bin,
            grid: r.grid,
        };
        g.validate()?;
        Ok(g)
    }
}

fn even_angles(kind: BeamKind, n: usize) -> Vec<f64> {
    let span = match kind {
        BeamKind::Parallel => PI,
        BeamKind::FanEquiangular => 2.0 * PI,
    };
    (0..n).map(|k| span * k as f64 / n as f64).collect()
}

impl ScanGeometry {
    pub fn parallel(grid: GridSpec, n_views: usize, n_dets: usize, det_spacing: f64) -> Result<Self> {
        let g = ScanGeometry {
            kind: BeamKind::Parallel,
            n_views_full: n_views,
            angles: even_angles(BeamKind::Parallel, n_views),
            n_dets,
            det_spacing,
            source_radius: 0.0,
            source_to_detector: 0.0,
            rays_per_bin: 1,
            grid,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn fan(
        grid: GridSpec,
        n_views: usize,
        n_dets: usize,
        det_spacing: f64,
        source_radius: f64,
        source_to_detector: f64,
    ) -> Result<Self> {
        let g = ScanGeometry {
            kind: BeamKind::FanEquiangular,
            n_views_full: n_views,
            angles: even_angles(BeamKind::FanEquiangular, n_views),
            n_dets,
            det_spacing,
            source_radius,
            source_to_detector,
            rays_per_bin: 1,
            grid,
        };
        g.validate()?;
        Ok(g)
    }

    /// Parallel-beam geometry on a unit-square grid with enough detectors to cover the diagonal.
    pub fn parallel_covering(n: usize, n_views: usize) -> Result<Self> {
        let grid = GridSpec::unit_square(n)?;
        let mut n_dets = (n as f64 * std::f64::consts::SQRT_2).ceil() as usize + 2;
        // even count keeps center rays off pixel boundaries
        n_dets += n_dets % 2;
        Self::parallel(grid, n_views, n_dets, grid.pixel_size)
    }

    pub fn with_rays_per_bin(mut self, rays: usize) -> Result<Self> {
        self.rays_per_bin = rays;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.n_views_full == 0 || self.angles.len() != self.n_views_full {
            return Err(Error::config(format!(
                "n_views_full = {} but {} angles given",
                self.n_views_full,
                self.angles.len()
            )));
        }
        if !all_finite(&self.angles) || self.angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("view angles must be finite and strictly increasing"));
        }
        let span = match self.kind {
            BeamKind::Parallel => PI,
            BeamKind::FanEquiangular => 2.0 * PI,
        };
        if self.angles[0] < 0.0 || *self.angles.last().unwrap() >= span {
            return Err(Error::config(format!("view angles must lie in [0, {span})")));
        }
        if self.n_dets == 0 {
            return Err(Error::config("n_dets must be at least 1"));
        }
        if !(self.det_spacing > 0.0 && self.det_spacing.is_finite()) {
            return Err(Error::config("det_spacing must be positive"));
        }
        if self.rays_per_bin == 0 {
            return Err(Error::config("rays_per_bin must be at least 1"));
        }
        if self.kind == BeamKind::FanEquiangular {
            if !(self.source_radius > 0.0 && self.source_to_detector > 0.0) {
                return Err(Error::config(
                    "fan beam needs positive source_radius and source_to_detector",
                ));
            }
            if self.source_to_detector <= self.source_radius {
                return Err(Error::config("detector must lie beyond the rotation center"));
            }
            if self.n_dets as f64 * self.det_spacing >= PI {
                return Err(Error::config("fan opening angle must be below pi"));
            }
        }
        Ok(())
    }

    pub fn n_rays(&self) -> usize {
        self.n_views_full * self.n_dets
    }

    /// Detector coordinate of sub-ray `sub` within bin `det`.
    pub(crate) fn det_coord(&self, det: usize, sub: usize) -> f64 {
        let frac = (sub as f64 + 0.5) / self.rays_per_bin as f64;
        (det as f64 + frac - 0.5 * self.n_dets as f64) * self.det_spacing
    }
}

/// Image on a grid, row-major with row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl Image {
    pub fn zeros(grid: GridSpec) -> Self {
        Image {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        let img = Image { grid, values };
        img.validate()?;
        Ok(img)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.values.len() != self.grid.len() {
            return Err(Error::input(format!(
                "image has {} values, grid needs {}",
                self.values.len(),
                self.grid.len()
            )));
        }
        if !all_finite(&self.values) {
            return Err(Error::input("image contains non-finite values"));
        }
        Ok(())
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.grid.nx + col]
    }
}

/// Projection data for a subset of the full view set, row-major (view, detector).
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub n_views_full: usize,
    pub n_dets: usize,
    pub view_indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Sinogram {
    pub fn zeros_full(n_views_full: usize, n_dets: usize) -> Self {
        Sinogram {
            n_views_full,
            n_dets,
            view_indices: (0..n_views_full).collect(),
            values: vec![0.0; n_views_full * n_dets],
        }
    }

    pub fn zeros_like_geometry(geo: &ScanGeometry) -> Self {
        Self::zeros_full(geo.n_views_full, geo.n_dets)
    }

    pub fn new(n_views_full: usize, n_dets: usize, view_indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let s = Sinogram {
            n_views_full,
            n_dets,
            view_indices,
            values,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_dets == 0 {
            return Err(Error::input("sinogram needs at least one detector"));
        }
        if self.values.len() != self.view_indices.len() * self.n_dets {
            return Err(Error::input(format!(
                "sinogram has {} values, expected {} views x {} detectors",
                self.values.len(),
                self.view_indices.len(),
                self.n_dets
            )));
        }
        if self.view_indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input("view indices must be sorted and unique"));
        }
        if self.view_indices.last().is_some_and(|&v| v >= self.n_views_full) {
            return Err(Error::input("view index out of range"));
        }
        if !all_finite(&self.values) {
            return Err(Error::input("sinogram contains non-finite values"));
        }
        Ok(())
    }

    pub fn n_views(&self) -> usize {
        self.view_indices.len()
    }

    pub fn is_full(&self) -> bool {
        self.view_indices.len() == self.n_views_full
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_dets..(k + 1) * self.n_dets]
    }

    pub(crate) fn check_against(&self, geo: &ScanGeometry) -> Result<()> {
        if self.n_views_full != geo.n_views_full || self.n_dets != geo.n_dets {
            return Err(Error::config(format!(
                "sinogram ({} views, {} dets) does not match geometry ({} views, {} dets)",
                self.n_views_full, self.n_dets, geo.n_views_full, geo.n_dets
            )));
        }
        Ok(())
    }
}

/// Retained views of a sparse acquisition (the selection operator).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewMask {
    pub n_views_full: usize,
    pub selected: Vec<usize>,
}

impl ViewMask {
    pub fn new(n_views_full: usize, selected: Vec<usize>) -> Result<Self> {
        let m = ViewMask { n_views_full, selected };
        m.validate()?;
        Ok(m)
    }

    pub fn identity(n_views_full: usize) -> Self {
        ViewMask {
            n_views_full,
            selected: (0..n_views_full).collect(),
        }
    }

    /// Evenly spread `n_views` out of `n_views_full`.
    ///
    /// With an exact divisor this is the stride pattern `0, s, 2s, ...`. Otherwise view `k`
    /// is the full view nearest to `k * n_views_full / n_views`.
    pub fn uniform(n_views_full: usize, n_views: usize) -> Result<Self> {
        if n_views == 0 || n_views > n_views_full {
            return Err(Error::config(format!(
                "cannot select {n_views} of {n_views_full} views"
            )));
        }
        let selected = if n_views_full.is_multiple_of(n_views) {
            let stride = n_views_full / n_views;
            (0..n_views).map(|k| k * stride).collect()
        } else {
            (0..n_views)
                .map(|k| ((k * n_views_full) as f64 / n_views as f64).round() as usize)
                .collect()
        };
        Self::new(n_views_full, selected)
    }

    pub fn validate(&self) -> Result<()> {
        if self.selected.is_empty() {
            return Err(Error::config("view mask must select at least one view"));
        }
        if self.selected.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("mask indices must be sorted and unique"));
        }
        if *self.selected.last().unwrap() >= self.n_views_full {
            return Err(Error::config("mask index out of range"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.selected.len() == self.n_views_full
    }
}
