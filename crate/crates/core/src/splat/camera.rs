use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss4d::quat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewKind {
    Input,
    Generated,
    Eval,
}

impl ViewKind {
    pub fn label(self) -> &'static str {
        match self {
            ViewKind::Input => "input",
            ViewKind::Generated => "generated",
            ViewKind::Eval => "eval",
        }
    }
}

/// Pinhole intrinsics in pixels. Pixel `(i, j)` samples the image plane at
/// `(i, j)`, so the principal point of a `w x h` image is `((w-1)/2, (h-1)/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Centered principal point and a horizontal field of view in radians.
    pub fn from_fov(width: usize, height: usize, fov_x: f64) -> Self {
        let f = 0.5 * width as f64 / (0.5 * fov_x).tan();
        Self {
            width,
            height,
            fx: f,
            fy: f,
            cx: 0.5 * (width as f64 - 1.0),
            cy: 0.5 * (height as f64 - 1.0),
        }
    }
}

/// A camera with world-to-camera extrinsics `x_cam = R(q_cam) x_world + t_cam`.
/// Camera axes: `x` right, `y` down, `z` forward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraView {
    pub id: String,
    pub intrinsics: Intrinsics,
    pub q_cam: [f64; 4],
    pub t_cam: [f64; 3],
    pub kind: ViewKind,
    pub t_index: usize,
    pub s_index: Option<usize>,
    pub q_init: [f64; 4],
    pub t_init: [f64; 3],
}

impl CameraView {
    pub fn new(
        id: impl Into<String>,
        intrinsics: Intrinsics,
        q_cam: [f64; 4],
        t_cam: [f64; 3],
        kind: ViewKind,
        t_index: usize,
        s_index: Option<usize>,
    ) -> Result<Self> {
        let n = quat::norm(q_cam);
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::NonUnitQuaternion { norm: n });
        }
        if (kind == ViewKind::Generated) != s_index.is_some() {
            return Err(Error::Config(format!(
                "{} view must {}carry a pose index",
                kind.label(),
                if kind == ViewKind::Generated { "" } else { "not " }
            )));
        }
        Ok(Self {
            id: id.into(),
            intrinsics,
            q_cam,
            t_cam,
            kind,
            t_index,
            s_index,
            q_init: q_cam,
            t_init: t_cam,
        })
    }

    /// Extrinsics of a camera at `eye` looking at `target`, with `up` roughly
    /// pointing up in the image.
    pub fn look_at(eye: [f64; 3], target: [f64; 3], up: [f64; 3]) -> ([f64; 4], [f64; 3]) {
        let eye = Vector3::from(eye);
        let fwd = (Vector3::from(target) - eye).normalize();
        let right = fwd.cross(&Vector3::from(up)).normalize();
        let down = fwd.cross(&right);
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), fwd.transpose()]);
        let q = quat::from_matrix(&r);
        let t = -(quat::to_matrix(q) * eye);
        (q, [t[0], t[1], t[2]])
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> [f64; 3] {
        let (r, t) = pose_matrices(self);
        let c = -(r.transpose() * t);
        [c[0], c[1], c[2]]
    }
}

/// World-to-camera rotation and translation; `q_cam` is normalized first.
pub fn pose_matrices(view: &CameraView) -> (Matrix3<f64>, Vector3<f64>) {
    (quat::to_matrix(view.q_cam), Vector3::from(view.t_cam))
}

/// Extrinsics gradient in the same layout as the view.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PoseGrad {
    pub q: [f64; 4],
    pub t: [f64; 3],
}

/// Pull gradients on `(R, t)` back to `(q_cam, t_cam)`.
pub fn pose_matrices_backward(view: &CameraView, g_rot: &Matrix3<f64>, g_t: &Vector3<f64>) -> PoseGrad {
    PoseGrad {
        q: quat::to_matrix_backward(view.q_cam, g_rot),
        t: [g_t[0], g_t[1], g_t[2]],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view(q: [f64; 4], t: [f64; 3]) -> CameraView {
        CameraView::new("v", Intrinsics::from_fov(8, 8, 1.0), q, t, ViewKind::Input, 0, None).unwrap()
    }

    #[test]
    fn identity_pose() {
        let (r, t) = pose_matrices(&view(quat::IDENTITY, [0.0; 3]));
        assert_eq!(r, Matrix3::identity());
        assert_eq!(t, Vector3::zeros());
    }

    #[test]
    fn look_at_puts_target_on_axis() {
        let (q, t) = CameraView::look_at([3.0, -2.0, 1.0], [0.1, 0.2, -0.3], [0.0, 0.0, 1.0]);
        let v = view(q, t);
        let (r, t) = pose_matrices(&v);
        let p = r * Vector3::new(0.1, 0.2, -0.3) + t;
        assert!(p[0].abs() < 1e-12 && p[1].abs() < 1e-12 && p[2] > 0.0);
        // world up projects to image up (negative y)
        let above = r * Vector3::new(0.1, 0.2, 0.7) + t;
        assert!(above[1] < 0.0);
        let c = v.center();
        assert!((c[0] - 3.0).abs() < 1e-12 && (c[1] + 2.0).abs() < 1e-12 && (c[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn view_validation() {
        let k = Intrinsics::from_fov(8, 8, 1.0);
        assert!(CameraView::new("a", k, [1.0, 0.1, 0.0, 0.0], [0.0; 3], ViewKind::Input, 0, None).is_err());
        assert!(CameraView::new("b", k, quat::IDENTITY, [0.0; 3], ViewKind::Input, 0, Some(1)).is_err());
        assert!(CameraView::new("c", k, quat::IDENTITY, [0.0; 3], ViewKind::Generated, 0, None).is_err());
        let g = CameraView::new("d", k, quat::IDENTITY, [0.0; 3], ViewKind::Generated, 2, Some(1)).unwrap();
        assert_eq!((g.q_init, g.t_init), (g.q_cam, g.t_cam));
    }

    #[test]
    fn centered_principal_point() {
        let k = Intrinsics::from_fov(64, 48, std::f64::consts::FRAC_PI_2);
        assert_eq!((k.cx, k.cy), (31.5, 23.5));
        assert!((k.fx - 32.0).abs() < 1e-12);
    }
}
