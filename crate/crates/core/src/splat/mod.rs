//! Differentiable pinhole splatting of time-sliced Gaussians.

mod camera;
mod image;
mod project;
mod raster;

pub use camera::{pose_matrices, pose_matrices_backward, CameraView, Intrinsics, PoseGrad, ViewKind};
pub use image::Image;
pub use project::{project_gaussian, Projected, BLUR, NEAR};
pub use raster::{render, render_backward, RenderGrads, RenderOptions, RenderTarget, RenderUpstream, ALPHA_MAX};
pub(crate) use image::write_file;
pub(crate) use project::{project_backward, project_with};

pub(crate) fn write_text(path: &std::path::Path, text: &str) -> crate::Result<()> {
    write_file(path, text.as_bytes())
}
