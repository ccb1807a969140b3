//! Acquisition geometry, projection operators, view selection and analytic reconstruction.

mod fbp;
mod geometry;
mod projector;
mod resample;
pub(crate) mod siddon;

pub use fbp::{fbp_reconstruct, ramp_filter_rows, FilterWindow};
pub use geometry::{BeamKind, GridSpec, Image, ScanGeometry, Sinogram, ViewMask};
pub use projector::{back_project, forward_project, ExecMode, Projector};
pub use resample::{subsample_views, upsample_sinogram_linear, zero_fill};
