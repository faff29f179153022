//! Visibility data for camera selection, produced by projecting random scene
//! points into a grid of cameras.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camsel::{CameraEntry, VisibilityData};
use crate::error::{Error, Result};
use crate::splat::{pose_matrices, CameraView, Intrinsics, ViewKind};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibilitySpec {
    pub rows: usize,
    pub cols: usize,
    pub n_points: usize,
    /// Points are drawn uniformly from `[-half_width, half_width]^3`.
    pub half_width: f64,
    /// Angular spacing of the camera grid, degrees.
    pub spacing_deg: f64,
    pub camera_distance: f64,
    pub fov_x: f64,
    pub seed: u64,
}

impl Default for VisibilitySpec {
    fn default() -> Self {
        Self {
            rows: 3,
            cols: 5,
            n_points: 500,
            half_width: 2.5,
            spacing_deg: 20.0,
            camera_distance: 6.0,
            fov_x: 0.9,
            seed: 0,
        }
    }
}

/// One camera per grid cell, all aimed at the origin; `layout = (col, row)`
/// so row 0 is the top of the array.
pub fn synthetic_visibility(spec: &VisibilitySpec) -> Result<VisibilityData> {
    if spec.rows == 0 || spec.cols == 0 {
        return Err(Error::Config("camera grid must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let points: Vec<[f64; 3]> = (0..spec.n_points)
        .map(|_| std::array::from_fn(|_| rng.random_range(-spec.half_width..=spec.half_width)))
        .collect();
    let k = Intrinsics::from_fov(64, 64, spec.fov_x);
    let centered = |i: usize, n: usize| (i as f64 - 0.5 * (n - 1) as f64) * spec.spacing_deg.to_radians();
    let mut cameras = Vec::with_capacity(spec.rows * spec.cols);
    for row in 0..spec.rows {
        for col in 0..spec.cols {
            let (az, el) = (centered(col, spec.cols), centered(row, spec.rows));
            // row 0 sits highest (world up is -y)
            let eye = [
                spec.camera_distance * az.sin() * el.cos(),
                spec.camera_distance * el.sin(),
                -spec.camera_distance * az.cos() * el.cos(),
            ];
            let (q, t) = CameraView::look_at(eye, [0.0; 3], [0.0, -1.0, 0.0]);
            let view = CameraView::new(format!("vis-{row}-{col}"), k, q, t, ViewKind::Input, 0, None)?;
            let (r, tr) = pose_matrices(&view);
            let seen = points
                .iter()
                .enumerate()
                .filter(|(_, p)| {
                    let c = r * nalgebra::Vector3::from(**p) + tr;
                    if c[2] <= 0.0 {
                        return false;
                    }
                    let u = k.fx * c[0] / c[2] + k.cx;
                    let v = k.fy * c[1] / c[2] + k.cy;
                    (0.0..=(k.width - 1) as f64).contains(&u) && (0.0..=(k.height - 1) as f64).contains(&v)
                })
                .map(|(i, _)| i as u64)
                .collect();
            cameras.push(CameraEntry {
                id: row * spec.cols + col,
                layout: [col as f64, row as f64],
                points: seen,
            });
        }
    }
    Ok(VisibilityData { cameras })
}
