//! Distortion field: maps a canonical primitive and a generated-view index
//! `(t, s)` to additive deltas on its mean, rotation pair and log-scales.
//!
//! The primitive's spatial center is normalized into plane-grid units, looked
//! up in an ennea-plane set, passed through a small ReLU trunk and decoded by
//! four linear heads. Heads start at zero, so an untrained field is the
//! identity.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffcore::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::featplanes::{FeatureTape, NormalizedCoord, PlaneInit, PlaneSet, PlaneSetConfig};
use crate::gauss4d::{quat, Gaussian4D, Gaussian4DGrad};

/// Axis-aligned world box plus the number of frames and generated poses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneBounds {
    min_xyz: [f64; 3],
    max_xyz: [f64; 3],
    t_count: usize,
    s_count: usize,
}

impl SceneBounds {
    pub fn new(min_xyz: [f64; 3], max_xyz: [f64; 3], t_count: usize, s_count: usize) -> Result<Self> {
        for axis in 0..3 {
            if !(max_xyz[axis] > min_xyz[axis]) {
                return Err(Error::DegenerateBounds { axis });
            }
        }
        if t_count == 0 || s_count == 0 {
            return Err(Error::Config("frame and pose counts must be positive".into()));
        }
        Ok(Self {
            min_xyz,
            max_xyz,
            t_count,
            s_count,
        })
    }

    pub fn min_xyz(&self) -> [f64; 3] {
        self.min_xyz
    }

    pub fn max_xyz(&self) -> [f64; 3] {
        self.max_xyz
    }

    pub fn t_count(&self) -> usize {
        self.t_count
    }

    pub fn s_count(&self) -> usize {
        self.s_count
    }

    /// Length of the box diagonal.
    pub fn extent(&self) -> f64 {
        (0..3)
            .map(|a| (self.max_xyz[a] - self.min_xyz[a]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn check(&self, t_index: usize, s_index: usize) -> Result<()> {
        if t_index >= self.t_count {
            return Err(Error::IndexOutOfRange {
                what: "frame",
                index: t_index,
                len: self.t_count,
            });
        }
        if s_index >= self.s_count {
            return Err(Error::IndexOutOfRange {
                what: "pose",
                index: s_index,
                len: self.s_count,
            });
        }
        Ok(())
    }
}

/// Grid coordinate of a world point together with `d coord / d world` per
/// spatial axis (zero where the point was clamped to the box).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPoint {
    pub coord: NormalizedCoord,
    pub slope: [f64; 3],
}

/// Map the box affinely onto `[0, spatial_res - 1]` per axis, clamping points
/// outside; frame and pose indices are used as grid coordinates directly.
pub fn normalize_coord(
    bounds: &SceneBounds,
    world: [f64; 3],
    t_index: usize,
    s_index: usize,
    spatial_res: usize,
) -> Result<GridPoint> {
    bounds.check(t_index, s_index)?;
    let top = spatial_res.saturating_sub(1) as f64;
    let mut xyz = [0.0; 3];
    let mut slope = [0.0; 3];
    for a in 0..3 {
        let k = top / (bounds.max_xyz[a] - bounds.min_xyz[a]);
        let u = (world[a] - bounds.min_xyz[a]) * k;
        if u > 0.0 && u < top {
            slope[a] = k;
        }
        xyz[a] = u.clamp(0.0, top);
    }
    Ok(GridPoint {
        coord: NormalizedCoord::new(xyz[0], xyz[1], xyz[2], t_index as f64, s_index as f64),
        slope,
    })
}

/// Additive deltas for one primitive; also used for their gradients.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Distortion {
    pub d_mu: [f64; 4],
    pub d_ql: [f64; 4],
    pub d_qr: [f64; 4],
    pub d_s: [f64; 4],
}

impl Distortion {
    pub(crate) fn to_array(self) -> [f64; 16] {
        let mut out = [0.0; 16];
        out[0..4].copy_from_slice(&self.d_mu);
        out[4..8].copy_from_slice(&self.d_ql);
        out[8..12].copy_from_slice(&self.d_qr);
        out[12..16].copy_from_slice(&self.d_s);
        out
    }

    fn from_slices(h: &[Vec<f64>]) -> Self {
        let four = |v: &Vec<f64>| [v[0], v[1], v[2], v[3]];
        Self {
            d_mu: four(&h[0]),
            d_ql: four(&h[1]),
            d_qr: four(&h[2]),
            d_s: four(&h[3]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.to_array().iter().all(|&v| v == 0.0)
    }
}

/// Field architecture; the temporal and pose resolutions come from [`SceneBounds`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub spatial_res: usize,
    pub channels: usize,
    pub scales: Vec<usize>,
    pub hidden: Vec<usize>,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            spatial_res: 64,
            channels: 16,
            scales: vec![1, 2],
            hidden: vec![64, 64],
        }
    }
}

impl FieldConfig {
    fn plane_config(&self, bounds: &SceneBounds) -> PlaneSetConfig {
        PlaneSetConfig {
            spatial_res: self.spatial_res,
            t_res: bounds.t_count,
            s_res: bounds.s_count,
            channels: self.channels,
            scales: self.scales.clone(),
        }
    }
}

/// Fully connected layer with weights stored `[out][in]`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Dense {
    w: ParamId,
    b: ParamId,
    fan_in: usize,
    fan_out: usize,
}

impl Dense {
    fn register<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        zero: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> {
            if zero {
                vec![0.0; n]
            } else {
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            }
        };
        let w = draw(fan_in * fan_out);
        let b = draw(fan_out);
        Ok(Self {
            w: store.insert(format!("{name}.w"), w)?,
            b: store.insert(format!("{name}.b"), b)?,
            fan_in,
            fan_out,
        })
    }

    fn attach(store: &ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Result<Self> {
        let w = store.id(&format!("{name}.w"))?;
        let b = store.id(&format!("{name}.b"))?;
        if store.values(w).len() != fan_in * fan_out || store.values(b).len() != fan_out {
            return Err(Error::ShapeMismatch(format!("layer `{name}` is not {fan_out}x{fan_in}")));
        }
        Ok(Self { w, b, fan_in, fan_out })
    }

    fn forward(&self, store: &ParamStore, x: &[f64]) -> Vec<f64> {
        let w = store.values(self.w);
        let b = store.values(self.b);
        (0..self.fan_out)
            .map(|o| {
                let row = &w[o * self.fan_in..(o + 1) * self.fan_in];
                b[o] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>()
            })
            .collect()
    }

    /// Accumulate weight gradients and return the input gradient.
    fn backward(&self, store: &mut ParamStore, x: &[f64], g: &[f64]) -> Vec<f64> {
        let mut gx = vec![0.0; self.fan_in];
        {
            let w = store.values(self.w);
            for (o, &go) in g.iter().enumerate() {
                if go == 0.0 {
                    continue;
                }
                let row = &w[o * self.fan_in..(o + 1) * self.fan_in];
                for (gi, wi) in gx.iter_mut().zip(row) {
                    *gi += go * wi;
                }
            }
        }
        let gw = store.grads_mut(self.w);
        for (o, &go) in g.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            for (gwi, xi) in gw[o * self.fan_in..(o + 1) * self.fan_in].iter_mut().zip(x) {
                *gwi += go * xi;
            }
        }
        for (gb, &go) in store.grads_mut(self.b).iter_mut().zip(g) {
            *gb += go;
        }
        gx
    }
}

const HEADS: [&str; 4] = ["mu", "ql", "qr", "s"];

/// Forward intermediates of one query.
#[derive(Clone, Debug)]
pub struct QueryTape {
    slope: [f64; 3],
    feature: FeatureTape,
    // trunk inputs per layer followed by the final activation
    acts: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistortionField {
    config: FieldConfig,
    bounds: SceneBounds,
    planes: PlaneSet,
    trunk: Vec<Dense>,
    heads: [Dense; 4],
}

impl DistortionField {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        config: FieldConfig,
        bounds: SceneBounds,
        init: PlaneInit,
        rng: &mut R,
    ) -> Result<Self> {
        let planes = PlaneSet::register(
            store,
            &format!("{prefix}.planes"),
            config.plane_config(&bounds),
            init,
            rng,
        )?;
        let mut width = planes.feature_len();
        let mut trunk = Vec::with_capacity(config.hidden.len());
        for (i, &h) in config.hidden.iter().enumerate() {
            trunk.push(Dense::register(store, &format!("{prefix}.trunk.{i}"), width, h, false, rng)?);
            width = h;
        }
        let mut heads = Vec::with_capacity(4);
        for name in HEADS {
            heads.push(Dense::register(store, &format!("{prefix}.head.{name}"), width, 4, true, rng)?);
        }
        Ok(Self {
            config,
            bounds,
            planes,
            trunk,
            heads: heads.try_into().expect("four heads"),
        })
    }

    /// Bind to a field already present in `store`, described by [`Self::header`].
    pub fn attach(store: &ParamStore, prefix: &str, header: &serde_json::Value) -> Result<Self> {
        let config: FieldConfig = serde_json::from_value(header["config"].clone())?;
        let bounds: SceneBounds = serde_json::from_value(header["bounds"].clone())?;
        let planes = PlaneSet::attach(store, &format!("{prefix}.planes"), config.plane_config(&bounds))?;
        let mut width = planes.feature_len();
        let mut trunk = Vec::new();
        for (i, &h) in config.hidden.iter().enumerate() {
            trunk.push(Dense::attach(store, &format!("{prefix}.trunk.{i}"), width, h)?);
            width = h;
        }
        let mut heads = Vec::with_capacity(4);
        for name in HEADS {
            heads.push(Dense::attach(store, &format!("{prefix}.head.{name}"), width, 4)?);
        }
        Ok(Self {
            config,
            bounds,
            planes,
            trunk,
            heads: heads.try_into().expect("four heads"),
        })
    }

    /// Architecture description stored alongside checkpoints.
    pub fn header(&self) -> serde_json::Value {
        serde_json::json!({ "config": self.config, "bounds": self.bounds })
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn bounds(&self) -> &SceneBounds {
        &self.bounds
    }

    pub fn planes(&self) -> &PlaneSet {
        &self.planes
    }

    /// Every parameter entry owned by the field.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.planes.ids().to_vec();
        ids.extend(self.mlp_ids());
        ids
    }

    pub fn mlp_ids(&self) -> Vec<ParamId> {
        self.trunk
            .iter()
            .chain(&self.heads)
            .flat_map(|d| [d.w, d.b])
            .collect()
    }

    pub fn head_ids(&self) -> Vec<ParamId> {
        self.heads.iter().flat_map(|d| [d.w, d.b]).collect()
    }

    pub fn query(&self, store: &ParamStore, g: &Gaussian4D, t_index: usize, s_index: usize) -> Result<Distortion> {
        Ok(self.query_taped(store, g, t_index, s_index)?.0)
    }

    pub fn query_taped(
        &self,
        store: &ParamStore,
        g: &Gaussian4D,
        t_index: usize,
        s_index: usize,
    ) -> Result<(Distortion, QueryTape)> {
        let gp = normalize_coord(&self.bounds, g.center(), t_index, s_index, self.config.spatial_res)?;
        let (feat, feature) = self.planes.multiscale_feature_taped(store, &gp.coord)?;
        let mut acts = vec![feat];
        for layer in &self.trunk {
            let mut h = layer.forward(store, acts.last().expect("input"));
            h.iter_mut().for_each(|v| *v = v.max(0.0));
            acts.push(h);
        }
        let last = acts.last().expect("trunk output");
        let outs: Vec<Vec<f64>> = self.heads.iter().map(|d| d.forward(store, last)).collect();
        Ok((
            Distortion::from_slices(&outs),
            QueryTape {
                slope: gp.slope,
                feature,
                acts,
            },
        ))
    }

    /// Accumulate field gradients into `store`; returns the gradient with
    /// respect to the primitive's spatial center.
    pub fn query_backward(&self, store: &mut ParamStore, tape: &QueryTape, grad: &Distortion) -> [f64; 3] {
        let g = grad.to_array();
        if g.iter().all(|&v| v == 0.0) {
            return [0.0; 3];
        }
        let last = tape.acts.last().expect("trunk output");
        let mut up = vec![0.0; last.len()];
        for (k, head) in self.heads.iter().enumerate() {
            let gx = head.backward(store, last, &g[4 * k..4 * k + 4]);
            up.iter_mut().zip(gx).for_each(|(u, v)| *u += v);
        }
        for (i, layer) in self.trunk.iter().enumerate().rev() {
            let out = &tape.acts[i + 1];
            for (u, &o) in up.iter_mut().zip(out) {
                if o <= 0.0 {
                    *u = 0.0;
                }
            }
            up = layer.backward(store, &tape.acts[i], &up);
        }
        let gc = self.planes.multiscale_feature_backward(store, &tape.feature, &up);
        [gc.x * tape.slope[0], gc.y * tape.slope[1], gc.z * tape.slope[2]]
    }

    /// Query every primitive at one `(t, s)`; evaluated in parallel.
    pub fn query_all(
        &self,
        store: &ParamStore,
        gaussians: &[Gaussian4D],
        t_index: usize,
        s_index: usize,
    ) -> Result<Vec<(Distortion, QueryTape)>> {
        gaussians
            .par_iter()
            .map(|g| self.query_taped(store, g, t_index, s_index))
            .collect()
    }
}

/// Distorted copy of `g`: additive mean and log-scale deltas, quaternions
/// offset then re-normalized. Opacity and color are untouched.
pub fn apply_distortion(g: &Gaussian4D, d: &Distortion) -> Result<Gaussian4D> {
    let mut out = *g;
    for i in 0..4 {
        out.mu[i] += d.d_mu[i];
        out.log_scales[i] += d.d_s[i];
    }
    out.q_l = shifted_rotation(g.q_l, d.d_ql)?;
    out.q_r = shifted_rotation(g.q_r, d.d_qr)?;
    Ok(out)
}

fn add4(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

fn shifted_rotation(q: [f64; 4], dq: [f64; 4]) -> Result<[f64; 4]> {
    // a zero offset on a stored (unit) quaternion is exactly the identity
    if dq == [0.0; 4] {
        return Ok(q);
    }
    let sum = add4(q, dq);
    let n = quat::norm(sum);
    if !(n >= 1e-12) {
        return Err(Error::DegenerateQuaternion { norm: n });
    }
    Ok(quat::normalized(sum))
}

/// Adjoint of [`apply_distortion`]: gradients for the canonical primitive and
/// for the deltas.
pub fn apply_distortion_backward(g: &Gaussian4D, d: &Distortion, grad: &Gaussian4DGrad) -> (Gaussian4DGrad, Distortion) {
    let gql = quat::normalize_backward(add4(g.q_l, d.d_ql), grad.q_l);
    let gqr = quat::normalize_backward(add4(g.q_r, d.d_qr), grad.q_r);
    let canon = Gaussian4DGrad {
        q_l: gql,
        q_r: gqr,
        ..*grad
    };
    let delta = Distortion {
        d_mu: grad.mu,
        d_ql: gql,
        d_qr: gqr,
        d_s: grad.log_scales,
    };
    (canon, delta)
}

/// Per-primitive length of the spatial part of the mean offset, in world units.
pub fn distortion_magnitude(
    field: &DistortionField,
    store: &ParamStore,
    gaussians: &[Gaussian4D],
    t_index: usize,
    s_index: usize,
) -> Result<Vec<f64>> {
    gaussians
        .iter()
        .map(|g| {
            let d = field.query(store, g, t_index, s_index)?.d_mu;
            Ok((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt())
        })
        .collect()
}
