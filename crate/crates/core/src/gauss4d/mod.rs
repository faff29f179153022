//! 4D Gaussian primitives.
//!
//! A primitive has a 4D mean `(x, y, z, t)`, log-scales, a pair of unit
//! quaternions defining its 4D orientation `L(q_l) R(q_r)`, an opacity logit
//! and a single RGB color. Conditioning on a time value yields a 3D Gaussian
//! plus a temporal weight.

mod densify;
pub mod quat;
mod rotation;
mod slice;

use serde::{Deserialize, Serialize};

pub use densify::{densify_prune, DensifyOptions, DensifyOutcome, GradStats};
pub use rotation::{
    covariance4d, covariance4d_backward, factor_covariance, pair_from_rotation, rotation4d, rotation_from_pair, rotation_from_pair_backward,
};
pub use slice::{slice_at, slice_backward, Sliced3D, SlicedGrad};

/// Parameter block widths, in storage order.
pub const MU_DIM: usize = 4;
pub const SCALE_DIM: usize = 4;
pub const QUAT_DIM: usize = 4;
pub const COLOR_DIM: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian4D {
    pub mu: [f64; 4],
    pub log_scales: [f64; 4],
    pub q_l: [f64; 4],
    pub q_r: [f64; 4],
    pub opacity_logit: f64,
    pub color: [f64; 3],
}

impl Gaussian4D {
    pub fn isotropic(mu: [f64; 4], log_scale: f64, color: [f64; 3]) -> Self {
        Self {
            mu,
            log_scales: [log_scale; 4],
            q_l: quat::IDENTITY,
            q_r: quat::IDENTITY,
            opacity_logit: 0.0,
            color,
        }
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn center(&self) -> [f64; 3] {
        [self.mu[0], self.mu[1], self.mu[2]]
    }

    /// Re-normalize both quaternions in place.
    pub fn normalize_rotations(&mut self) {
        self.q_l = quat::normalized(self.q_l);
        self.q_r = quat::normalized(self.q_r);
    }

    pub fn is_finite(&self) -> bool {
        self.mu
            .iter()
            .chain(&self.log_scales)
            .chain(&self.q_l)
            .chain(&self.q_r)
            .chain(&self.color)
            .chain(std::iter::once(&self.opacity_logit))
            .all(|v| v.is_finite())
    }

    /// Plain-text row: `mu(4) log_scales(4) q_l(4) q_r(4) opacity_logit color(3)`.
    pub fn to_row(&self) -> String {
        let mut cols: Vec<String> = Vec::with_capacity(20);
        for v in self
            .mu
            .iter()
            .chain(&self.log_scales)
            .chain(&self.q_l)
            .chain(&self.q_r)
            .chain(std::iter::once(&self.opacity_logit))
            .chain(&self.color)
        {
            cols.push(format!("{v:.17e}"));
        }
        cols.join(" ")
    }
}

/// Gradient with the same layout as [`Gaussian4D`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Gaussian4DGrad {
    pub mu: [f64; 4],
    pub log_scales: [f64; 4],
    pub q_l: [f64; 4],
    pub q_r: [f64; 4],
    pub opacity_logit: f64,
    pub color: [f64; 3],
}

impl Gaussian4DGrad {
    pub fn add_assign(&mut self, o: &Gaussian4DGrad) {
        for i in 0..4 {
            self.mu[i] += o.mu[i];
            self.log_scales[i] += o.log_scales[i];
            self.q_l[i] += o.q_l[i];
            self.q_r[i] += o.q_r[i];
        }
        self.opacity_logit += o.opacity_logit;
        for i in 0..3 {
            self.color[i] += o.color[i];
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Write a scene as plain text, one primitive per line.
pub fn dump_scene(gaussians: &[Gaussian4D]) -> String {
    let mut out = String::from(
        "# mu_x mu_y mu_z mu_t ls_x ls_y ls_z ls_t ql_w ql_x ql_y ql_z qr_w qr_x qr_y qr_z opacity_logit r g b\n",
    );
    for g in gaussians {
        out.push_str(&g.to_row());
        out.push('\n');
    }
    out
}
