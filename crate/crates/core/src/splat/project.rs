use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};

use super::camera::{pose_matrices, CameraView, Intrinsics};
use crate::gauss4d::Sliced3D;

/// Isotropic screen-space variance added to every footprint, in px².
pub const BLUR: f64 = 0.3;
/// Primitives with camera depth at or below this are culled.
pub const NEAR: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projected {
    pub mean2: [f64; 2],
    pub cov2: Matrix2<f64>,
    pub depth: f64,
}

/// Gradients of a projection with respect to the 3D Gaussian and the pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionGrad {
    pub mean3: Vector3<f64>,
    pub cov3: Matrix3<f64>,
    pub rot: Matrix3<f64>,
    pub t: Vector3<f64>,
}

fn jacobian(k: &Intrinsics, p: &Vector3<f64>) -> Matrix2x3<f64> {
    let z = p[2];
    Matrix2x3::new(
        k.fx / z,
        0.0,
        -k.fx * p[0] / (z * z),
        0.0,
        k.fy / z,
        -k.fy * p[1] / (z * z),
    )
}

/// Pinhole projection with a local affine (EWA) approximation of the footprint.
pub fn project_gaussian(view: &CameraView, sl: &Sliced3D) -> Option<Projected> {
    let (r, t) = pose_matrices(view);
    project_with(&view.intrinsics, &r, &t, &sl.mean3, &sl.cov3)
}

pub(crate) fn project_with(
    k: &Intrinsics,
    r: &Matrix3<f64>,
    t: &Vector3<f64>,
    mean3: &Vector3<f64>,
    cov3: &Matrix3<f64>,
) -> Option<Projected> {
    let p = r * mean3 + t;
    let z = p[2];
    if !(z > NEAR) {
        return None;
    }
    let m = jacobian(k, &p) * r;
    let cov2 = m * cov3 * m.transpose() + Matrix2::identity() * BLUR;
    Some(Projected {
        mean2: [k.fx * p[0] / z + k.cx, k.fy * p[1] / z + k.cy],
        cov2,
        depth: z,
    })
}

/// Adjoint of [`project_with`] for a primitive in front of the camera.
pub(crate) fn project_backward(
    k: &Intrinsics,
    r: &Matrix3<f64>,
    t: &Vector3<f64>,
    mean3: &Vector3<f64>,
    cov3: &Matrix3<f64>,
    g_mean2: [f64; 2],
    g_cov2: &Matrix2<f64>,
) -> ProjectionGrad {
    let p = r * mean3 + t;
    let (x, y, z) = (p[0], p[1], p[2]);
    let j = jacobian(k, &p);
    let m = j * r;

    let g_m = (g_cov2 + g_cov2.transpose()) * m * cov3;
    let g_cov3 = m.transpose() * g_cov2 * m;
    let g_j = g_m * r.transpose();
    let mut g_rot = j.transpose() * g_m;

    let (z2, z3) = (z * z, z * z * z);
    let mut g_p = Vector3::new(
        g_mean2[0] * k.fx / z - g_j[(0, 2)] * k.fx / z2,
        g_mean2[1] * k.fy / z - g_j[(1, 2)] * k.fy / z2,
        0.0,
    );
    g_p[2] = -g_mean2[0] * k.fx * x / z2 - g_mean2[1] * k.fy * y / z2 - g_j[(0, 0)] * k.fx / z2
        + g_j[(0, 2)] * 2.0 * k.fx * x / z3
        - g_j[(1, 1)] * k.fy / z2
        + g_j[(1, 2)] * 2.0 * k.fy * y / z3;

    g_rot += g_p * mean3.transpose();
    ProjectionGrad {
        mean3: r.transpose() * g_p,
        cov3: g_cov3,
        rot: g_rot,
        t: g_p,
    }
}

/// Inverse of a symmetric 2x2 matrix as `(a, b, c)` for `[[a, b], [b, c]]`,
/// or `None` when it is not positive definite or worse conditioned than 1e12.
pub(crate) fn conic(cov2: &Matrix2<f64>) -> Option<[f64; 3]> {
    let (a, b, c) = (cov2[(0, 0)], 0.5 * (cov2[(0, 1)] + cov2[(1, 0)]), cov2[(1, 1)]);
    let det = a * c - b * b;
    let mid = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let (hi, lo) = (mid + rad, mid - rad);
    if !(det > 0.0) || !(lo > 0.0) || hi / lo > 1e12 {
        return None;
    }
    Some([c / det, -b / det, a / det])
}

/// Largest eigenvalue of a symmetric 2x2 matrix.
pub(crate) fn max_eigen(cov2: &Matrix2<f64>) -> f64 {
    let (a, b, c) = (cov2[(0, 0)], cov2[(0, 1)], cov2[(1, 1)]);
    0.5 * (a + c) + (0.25 * (a - c) * (a - c) + b * b).sqrt()
}
