//! Phantoms, simulated acquisitions and the deterministic starting point for the solver.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::DualState;
use crate::tomo::{
    fbp_reconstruct, forward_project, subsample_views, upsample_sinogram_linear, FilterWindow, GridSpec, Image,
    ScanGeometry, Sinogram, ViewMask,
};

/// Ellipse in units of the grid half-extent; `angle` is in degrees, counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub axes: [f64; 2],
    #[serde(default)]
    pub angle: f64,
    pub intensity: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.to_radians().sin_cos();
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        let u = (dx * c + dy * s) / self.axes[0];
        let v = (-dx * s + dy * c) / self.axes[1];
        u * u + v * v <= 1.0
    }

    fn validate(&self) -> Result<()> {
        if !(self.axes[0] > 0.0 && self.axes[1] > 0.0) {
            return Err(Error::config(format!(
                "ellipse axes must be positive, got {:?}",
                self.axes
            )));
        }
        let finite = self.center.iter().chain(&self.axes).all(|v| v.is_finite());
        if !finite || !self.intensity.is_finite() || !self.angle.is_finite() {
            return Err(Error::config("ellipse parameters must be finite"));
        }
        Ok(())
    }
}

/// Modified Shepp-Logan table (higher-contrast variant).
pub fn shepp_logan_modified() -> Vec<Ellipse> {
    const T: [[f64; 6]; 10] = [
        [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
        [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
        [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
        [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
        [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
        [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
        [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
        [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
        [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
        [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
    ];
    T.iter()
        .map(|r| Ellipse {
            intensity: r[0],
            axes: [r[1], r[2]],
            center: [r[3], r[4]],
            angle: r[5],
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomKind {
    #[default]
    SheppLoganModified,
    Disk,
    CustomEllipses,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    /// Used by `custom-ellipses`; a `disk` uses the first entry, or a centered unit-intensity disk of
    /// radius 0.5 when empty.
    #[serde(default)]
    pub ellipses: Vec<Ellipse>,
    pub grid: GridSpec,
}

impl PhantomSpec {
    pub fn shepp_logan(grid: GridSpec) -> Self {
        PhantomSpec {
            kind: PhantomKind::SheppLoganModified,
            ellipses: Vec::new(),
            grid,
        }
    }

    pub fn disk(grid: GridSpec, radius: f64, intensity: f64) -> Self {
        PhantomSpec {
            kind: PhantomKind::Disk,
            ellipses: vec![Ellipse {
                center: [0.0, 0.0],
                axes: [radius, radius],
                angle: 0.0,
                intensity,
            }],
            grid,
        }
    }

    pub fn custom(grid: GridSpec, ellipses: Vec<Ellipse>) -> Self {
        PhantomSpec {
            kind: PhantomKind::CustomEllipses,
            ellipses,
            grid,
        }
    }

    pub fn effective_ellipses(&self) -> Vec<Ellipse> {
        match self.kind {
            PhantomKind::SheppLoganModified => shepp_logan_modified(),
            PhantomKind::Disk => vec![self.ellipses.first().copied().unwrap_or(Ellipse {
                center: [0.0, 0.0],
                axes: [0.5, 0.5],
                angle: 0.0,
                intensity: 1.0,
            })],
            PhantomKind::CustomEllipses => self.ellipses.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.kind == PhantomKind::Disk {
            if let Some(e) = self.ellipses.first() {
                if e.axes[0] != e.axes[1] {
                    return Err(Error::config("disk phantom needs equal axes"));
                }
            }
        }
        self.effective_ellipses().iter().try_for_each(Ellipse::validate)
    }

    /// Phantom value at a point given in half-extent units.
    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        self.effective_ellipses()
            .iter()
            .filter(|e| e.contains(x, y))
            .map(|e| e.intensity)
            .sum()
    }
}

/// Samples the ellipse sum at pixel centers.
pub fn make_phantom(spec: &PhantomSpec) -> Result<Image> {
    spec.validate()?;
    let g = spec.grid;
    let ellipses = spec.effective_ellipses();
    let half = g.half_extent();
    let mut values = Vec::with_capacity(g.len());
    for row in 0..g.ny {
        for col in 0..g.nx {
            let [px, py] = g.pixel_center(row, col);
            let x = (px - g.origin[0]) / half;
            let y = (py - g.origin[1]) / half;
            values.push(ellipses.iter().filter(|e| e.contains(x, y)).map(|e| e.intensity).sum());
        }
    }
    Image::new(g, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseModel {
    #[default]
    None,
    Gaussian,
    /// Photon counts `N ~ Poisson(I0 exp(-p))`, reported as `-ln(N / I0)`.
    PoissonTransmission,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub model: NoiseModel,
    pub sigma: f64,
    /// Incident photon count per bin.
    pub photons: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            model: NoiseModel::None,
            sigma: 0.0,
            photons: 1e6,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec::default()
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        NoiseSpec {
            model: NoiseModel::Gaussian,
            sigma,
            seed,
            ..Default::default()
        }
    }

    pub fn poisson(photons: f64, seed: u64) -> Self {
        NoiseSpec {
            model: NoiseModel::PoissonTransmission,
            photons,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::param(format!(
                "noise sigma must be nonnegative, got {}",
                self.sigma
            )));
        }
        if !(self.photons > 0.0 && self.photons.is_finite()) {
            return Err(Error::param(format!(
                "photon count must be positive, got {}",
                self.photons
            )));
        }
        Ok(())
    }

    /// Applies the noise model in bin order with a fresh generator seeded from `seed`.
    pub fn apply(&self, values: &mut [f64]) -> Result<()> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        match self.model {
            NoiseModel::None => {}
            NoiseModel::Gaussian => {
                if self.sigma > 0.0 {
                    let n = Normal::new(0.0, self.sigma).map_err(|e| Error::param(e.to_string()))?;
                    for v in values.iter_mut() {
                        *v += n.sample(&mut rng);
                    }
                }
            }
            NoiseModel::PoissonTransmission => {
                for v in values.iter_mut() {
                    let mean = self.photons * (-*v).exp();
                    let counts = if mean > 0.0 {
                        Poisson::new(mean)
                            .map_err(|e| Error::param(e.to_string()))?
                            .sample(&mut rng)
                    } else {
                        0.0
                    };
                    // a zero count is clipped to one photon
                    *v = -(counts.max(1.0) / self.photons).ln();
                }
            }
        }
        Ok(())
    }
}

/// Projects the phantom onto every view, applies noise, and selects the measured views.
/// Returns `(measured sparse sinogram, full sinogram)`.
pub fn simulate_measurement(
    phantom: &Image,
    geo: &ScanGeometry,
    mask: &ViewMask,
    noise: &NoiseSpec,
) -> Result<(Sinogram, Sinogram)> {
    noise.validate()?;
    mask.validate()?;
    if mask.n_views_full != geo.n_views_full {
        return Err(Error::config("view mask does not match the geometry"));
    }
    let mut full = forward_project(phantom, geo)?;
    noise.apply(&mut full.values)?;
    let sparse = subsample_views(&full, mask)?;
    Ok((sparse, full))
}

/// Starting point: views filled in by periodic linear interpolation, image by ramp-filtered
/// backprojection of the filled sinogram with negative values clamped to zero.
pub fn initialize(s: &Sinogram, geo: &ScanGeometry, mask: &ViewMask) -> Result<DualState> {
    s.validate()?;
    mask.validate()?;
    if s.view_indices != mask.selected || s.n_views_full != geo.n_views_full || s.n_dets != geo.n_dets {
        return Err(Error::config(
            "measured sinogram does not conform to the mask and geometry",
        ));
    }
    let z = if s.is_full() {
        s.clone()
    } else {
        upsample_sinogram_linear(s, geo.n_views_full)?
    };
    let mut x = fbp_reconstruct(&z, geo, FilterWindow::RamLak)?;
    x.values.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(DualState { x, z })
}
