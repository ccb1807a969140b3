//! Dual-domain objective
//!
//! ```text
//! Phi(x, z)   = f(x, z) + R(x) + Q(z)
//! f(x, z)     = 1/2 |A x - z|^2 + lambda/2 |P0 z - s|^2
//! Phi_eps     = f + R_eps + Q_eps
//! ```
//!
//! `x` is the image, `z` the full-view sinogram, `s` the measured sparse-view sinogram and
//! `P0` the view selection.

use crate::error::{Error, Result};
use crate::linalg::{all_finite, norm, norm_sq};
use crate::regularizer::{ConvStack, DomainRegularizer, LipschitzEstimate, LipschitzOptions, Shape2};
use crate::tomo::{Image, Projector, Sinogram, ViewMask};

pub const DEFAULT_LAMBDA: f64 = 10.0;

/// Image and full-view sinogram iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub x: Image,
    pub z: Sinogram,
}

/// Everything that defines one reconstruction problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub projector: Projector,
    pub mask: ViewMask,
    pub measured: Sinogram,
    pub lambda: f64,
    pub image_reg: Option<DomainRegularizer>,
    pub sino_reg: Option<DomainRegularizer>,
}

impl ProblemSpec {
    pub fn new(
        projector: Projector,
        mask: ViewMask,
        measured: Sinogram,
        lambda: f64,
        image_stack: Option<ConvStack>,
        sino_stack: Option<ConvStack>,
    ) -> Result<Self> {
        let geo = projector.geometry();
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::config(format!("lambda must be positive, got {lambda}")));
        }
        mask.validate()?;
        measured.validate()?;
        if mask.n_views_full != geo.n_views_full
            || measured.n_views_full != geo.n_views_full
            || measured.n_dets != geo.n_dets
            || measured.view_indices != mask.selected
        {
            return Err(Error::config("measured sinogram does not conform to the view mask"));
        }
        let img_shape = Shape2::new(geo.grid.ny, geo.grid.nx);
        let sino_shape = Shape2::new(geo.n_views_full, geo.n_dets);
        Ok(ProblemSpec {
            image_reg: image_stack.map(|s| DomainRegularizer::new(s, img_shape)).transpose()?,
            sino_reg: sino_stack.map(|s| DomainRegularizer::new(s, sino_shape)).transpose()?,
            projector,
            mask,
            measured,
            lambda,
        })
    }

    pub fn image_len(&self) -> usize {
        self.projector.geometry().grid.len()
    }

    pub fn sino_len(&self) -> usize {
        self.projector.geometry().n_rays()
    }

    pub fn check_state(&self, state: &DualState) -> Result<()> {
        let geo = self.projector.geometry();
        if state.x.grid != geo.grid || state.x.values.len() != geo.grid.len() {
            return Err(Error::input("image does not match the problem grid"));
        }
        if !state.z.is_full() || state.z.n_views_full != geo.n_views_full || state.z.n_dets != geo.n_dets {
            return Err(Error::input(
                "sinogram iterate must be full-view on the problem geometry",
            ));
        }
        if state.z.values.len() != self.sino_len() {
            return Err(Error::input("sinogram iterate has the wrong length"));
        }
        Ok(())
    }

    pub fn state_from(&self, x: Vec<f64>, z: Vec<f64>) -> DualState {
        let geo = self.projector.geometry();
        DualState {
            x: Image {
                grid: geo.grid,
                values: x,
            },
            z: Sinogram {
                n_views_full: geo.n_views_full,
                n_dets: geo.n_dets,
                view_indices: (0..geo.n_views_full).collect(),
                values: z,
            },
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.projector.forward_raw(x)
    }

    pub fn back(&self, r: &[f64]) -> Vec<f64> {
        let all: Vec<usize> = (0..self.projector.geometry().n_views_full).collect();
        self.projector.back_raw(&all, r)
    }

    /// `P0 z - s`, over the selected rows.
    fn selection_residual(&self, z: &[f64]) -> Vec<f64> {
        let nd = self.measured.n_dets;
        let mut out = Vec::with_capacity(self.measured.values.len());
        for (k, &v) in self.mask.selected.iter().enumerate() {
            let zr = &z[v * nd..(v + 1) * nd];
            let sr = self.measured.row(k);
            out.extend(zr.iter().zip(sr).map(|(a, b)| a - b));
        }
        out
    }

    /// `f` given a precomputed `A x`.
    pub fn data_term_with(&self, ax: &[f64], z: &[f64]) -> f64 {
        let fit: f64 = ax.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
        0.5 * fit + 0.5 * self.lambda * norm_sq(&self.selection_residual(z))
    }

    /// `grad_z f = -(A x - z) + lambda P0^T (P0 z - s)`.
    pub fn grad_f_z_with(&self, ax: &[f64], z: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = z.iter().zip(ax).map(|(zi, ai)| zi - ai).collect();
        let nd = self.measured.n_dets;
        let sel = self.selection_residual(z);
        for (k, &v) in self.mask.selected.iter().enumerate() {
            for d in 0..nd {
                g[v * nd + d] += self.lambda * sel[k * nd + d];
            }
        }
        g
    }

    /// `grad_x f = A^T (A x - z)`.
    pub fn grad_f_x_with(&self, ax: &[f64], z: &[f64]) -> Vec<f64> {
        let r: Vec<f64> = ax.iter().zip(z).map(|(a, b)| a - b).collect();
        self.back(&r)
    }

    pub fn reg_image_value(&self, x: &[f64], eps: f64) -> Result<f64> {
        self.image_reg.as_ref().map_or(Ok(0.0), |r| r.value(x, eps))
    }

    pub fn reg_sino_value(&self, z: &[f64], eps: f64) -> Result<f64> {
        self.sino_reg.as_ref().map_or(Ok(0.0), |r| r.value(z, eps))
    }

    pub fn reg_image_grad(&self, x: &[f64], eps: f64) -> Result<Vec<f64>> {
        self.image_reg
            .as_ref()
            .map_or_else(|| Ok(vec![0.0; x.len()]), |r| r.grad(x, eps))
    }

    pub fn reg_sino_grad(&self, z: &[f64], eps: f64) -> Result<Vec<f64>> {
        self.sino_reg
            .as_ref()
            .map_or_else(|| Ok(vec![0.0; z.len()]), |r| r.grad(z, eps))
    }

    /// `Phi_eps` given a precomputed `A x`. Terms are summed in the fixed order f, R, Q.
    pub fn phi_eps_with(&self, ax: &[f64], x: &[f64], z: &[f64], eps: f64) -> Result<f64> {
        let f = self.data_term_with(ax, z);
        let r = self.reg_image_value(x, eps)?;
        let q = self.reg_sino_value(z, eps)?;
        Ok(f + r + q)
    }

    /// `(grad_x Phi_eps, grad_z Phi_eps)` given a precomputed `A x`.
    pub fn grad_phi_eps_with(&self, ax: &[f64], x: &[f64], z: &[f64], eps: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut gx = self.grad_f_x_with(ax, z);
        for (g, r) in gx.iter_mut().zip(self.reg_image_grad(x, eps)?) {
            *g += r;
        }
        let mut gz = self.grad_f_z_with(ax, z);
        for (g, q) in gz.iter_mut().zip(self.reg_sino_grad(z, eps)?) {
            *g += q;
        }
        Ok((gx, gz))
    }

    /// Composite Lipschitz model of `grad Phi_eps`.
    pub fn lipschitz_model(&self, power_iters: usize, opts: &LipschitzOptions) -> Result<LipschitzModel> {
        let model = LipschitzModel {
            a_norm_sq: self.projector.norm_sq_estimate(power_iters),
            lambda: self.lambda,
            image_reg: self.image_reg.as_ref().map(|r| r.lipschitz(opts)).transpose()?,
            sino_reg: self.sino_reg.as_ref().map(|r| r.lipschitz(opts)).transpose()?,
        };
        let parts = [model.image_reg, model.sino_reg];
        let finite = model.a_norm_sq.is_finite()
            && parts
                .iter()
                .flatten()
                .all(|e| e.jacobian_norm_sq.is_finite() && e.curvature.is_finite());
        if !finite {
            return Err(Error::Numerical("Lipschitz estimate is not finite".into()));
        }
        Ok(model)
    }
}

/// Block-wise Lipschitz bounds for `grad Phi_eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzModel {
    /// Power-iteration estimate of `||A||^2`.
    pub a_norm_sq: f64,
    pub lambda: f64,
    pub image_reg: Option<LipschitzEstimate>,
    pub sino_reg: Option<LipschitzEstimate>,
}

impl LipschitzModel {
    /// Lipschitz constant of `grad_x f`.
    pub fn f_x_block(&self) -> f64 {
        self.a_norm_sq
    }

    /// Lipschitz constant of `grad_z f`; `P0^T P0` is a 0/1 diagonal.
    pub fn f_z_block(&self) -> f64 {
        1.0 + self.lambda
    }

    /// Lipschitz bound of the whole `grad f`, from `f = 1/2 |[A, -I] (x, z)|^2 + ...`.
    pub fn f_total(&self) -> f64 {
        self.a_norm_sq + 1.0 + self.lambda
    }

    pub fn image_reg(&self, eps: f64) -> f64 {
        self.image_reg.map_or(0.0, |l| l.at(eps))
    }

    pub fn sino_reg(&self, eps: f64) -> f64 {
        self.sino_reg.map_or(0.0, |l| l.at(eps))
    }

    /// `L_hat(eps)` for the full gradient.
    pub fn total(&self, eps: f64) -> f64 {
        self.f_total() + self.image_reg(eps) + self.sino_reg(eps)
    }
}

fn check(state: &DualState, spec: &ProblemSpec) -> Result<()> {
    spec.check_state(state)?;
    if !all_finite(&state.x.values) || !all_finite(&state.z.values) {
        return Err(Error::input("state contains non-finite values"));
    }
    Ok(())
}

/// `f(x, z)`.
pub fn data_term(state: &DualState, spec: &ProblemSpec) -> Result<f64> {
    check(state, spec)?;
    let ax = spec.forward(&state.x.values);
    Ok(spec.data_term_with(&ax, &state.z.values))
}

pub fn grad_f_x(state: &DualState, spec: &ProblemSpec) -> Result<Image> {
    check(state, spec)?;
    let ax = spec.forward(&state.x.values);
    Ok(Image {
        grid: state.x.grid,
        values: spec.grad_f_x_with(&ax, &state.z.values),
    })
}

pub fn grad_f_z(state: &DualState, spec: &ProblemSpec) -> Result<Sinogram> {
    check(state, spec)?;
    let ax = spec.forward(&state.x.values);
    let mut z = state.z.clone();
    z.values = spec.grad_f_z_with(&ax, &state.z.values);
    Ok(z)
}

/// Unsmoothed objective `f + ||g_R(x)||_{2,1} + ||g_Q(z)||_{2,1}`.
pub fn phi(state: &DualState, spec: &ProblemSpec) -> Result<f64> {
    check(state, spec)?;
    let ax = spec.forward(&state.x.values);
    let f = spec.data_term_with(&ax, &state.z.values);
    let r = spec.image_reg.as_ref().map_or(Ok(0.0), |r| r.norm(&state.x.values))?;
    let q = spec.sino_reg.as_ref().map_or(Ok(0.0), |r| r.norm(&state.z.values))?;
    Ok(f + r + q)
}

pub fn phi_eps(state: &DualState, spec: &ProblemSpec, eps: f64) -> Result<f64> {
    check(state, spec)?;
    let ax = spec.forward(&state.x.values);
    spec.phi_eps_with(&ax, &state.x.values, &state.z.values, eps)
}

pub fn grad_phi_eps(state: &DualState, spec: &ProblemSpec, eps: f64) -> Result<(Image, Sinogram)> {
    check(state, spec)?;
    let ax = spec.forward(&state.x.values);
    let (gx, gz) = spec.grad_phi_eps_with(&ax, &state.x.values, &state.z.values, eps)?;
    let mut z = state.z.clone();
    z.values = gz;
    Ok((
        Image {
            grid: state.x.grid,
            values: gx,
        },
        z,
    ))
}

/// Euclidean norm of the concatenated (image, sinogram) gradient.
pub fn grad_norm(gx: &[f64], gz: &[f64]) -> f64 {
    (norm_sq(gx) + norm_sq(gz)).sqrt()
}

/// Norm of the concatenation of two blocks, each given separately.
pub fn pair_norm(a: &[f64], b: &[f64]) -> f64 {
    norm(a).hypot(norm(b))
}
