//! Trainable state: canonical Gaussians, the optional distortion field and
//! the extrinsics of generated cameras, all in one [`ParamStore`].

use std::path::Path;

use rand::Rng;
use serde_json::json;

use crate::diffcore::{Checkpoint, ParamId, ParamStore, RowPlan};
use crate::error::{Error, Result};
use crate::featplanes::PlaneInit;
use crate::gauss4d::{quat, Gaussian4D, Gaussian4DGrad, COLOR_DIM, MU_DIM, QUAT_DIM, SCALE_DIM};
use crate::splat::{CameraView, ViewKind};
use crate::stdf::{DistortionField, FieldConfig, SceneBounds};

pub const FIELD_PREFIX: &str = "field";

/// Column blocks of the primitive table, one store entry each.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GaussianParams {
    pub mu: ParamId,
    pub log_scales: ParamId,
    pub q_l: ParamId,
    pub q_r: ParamId,
    pub opacity: ParamId,
    pub color: ParamId,
}

const GAUSS_NAMES: [&str; 6] = ["mu", "log_scales", "q_l", "q_r", "opacity", "color"];
const GAUSS_STRIDES: [usize; 6] = [MU_DIM, SCALE_DIM, QUAT_DIM, QUAT_DIM, 1, COLOR_DIM];

impl GaussianParams {
    pub fn register(store: &mut ParamStore, gaussians: &[Gaussian4D]) -> Result<Self> {
        let mut cols: [Vec<f64>; 6] = Default::default();
        for g in gaussians {
            cols[0].extend(g.mu);
            cols[1].extend(g.log_scales);
            cols[2].extend(g.q_l);
            cols[3].extend(g.q_r);
            cols[4].push(g.opacity_logit);
            cols[5].extend(g.color);
        }
        let mut ids = Vec::with_capacity(6);
        for (name, col) in GAUSS_NAMES.iter().zip(cols) {
            ids.push(store.insert(format!("gaussians.{name}"), col)?);
        }
        Ok(Self::from_ids(&ids))
    }

    pub fn attach(store: &ParamStore) -> Result<Self> {
        let ids = GAUSS_NAMES
            .iter()
            .map(|n| store.id(&format!("gaussians.{n}")))
            .collect::<Result<Vec<_>>>()?;
        let p = Self::from_ids(&ids);
        let n = store.values(p.opacity).len();
        for (id, stride) in p.ids().iter().zip(GAUSS_STRIDES) {
            if store.values(*id).len() != n * stride {
                return Err(Error::ShapeMismatch("gaussian parameter blocks disagree on count".into()));
            }
        }
        Ok(p)
    }

    fn from_ids(ids: &[ParamId]) -> Self {
        Self {
            mu: ids[0],
            log_scales: ids[1],
            q_l: ids[2],
            q_r: ids[3],
            opacity: ids[4],
            color: ids[5],
        }
    }

    pub fn ids(&self) -> [ParamId; 6] {
        [self.mu, self.log_scales, self.q_l, self.q_r, self.opacity, self.color]
    }

    pub fn count(&self, store: &ParamStore) -> usize {
        store.values(self.opacity).len()
    }

    pub fn gather(&self, store: &ParamStore) -> Vec<Gaussian4D> {
        let (mu, ls, ql, qr, op, col) = (
            store.values(self.mu),
            store.values(self.log_scales),
            store.values(self.q_l),
            store.values(self.q_r),
            store.values(self.opacity),
            store.values(self.color),
        );
        let four = |v: &[f64], i: usize| [v[4 * i], v[4 * i + 1], v[4 * i + 2], v[4 * i + 3]];
        (0..op.len())
            .map(|i| Gaussian4D {
                mu: four(mu, i),
                log_scales: four(ls, i),
                q_l: four(ql, i),
                q_r: four(qr, i),
                opacity_logit: op[i],
                color: [col[3 * i], col[3 * i + 1], col[3 * i + 2]],
            })
            .collect()
    }

    /// Add per-primitive gradients into the store.
    pub fn accumulate(&self, store: &mut ParamStore, grads: &[Gaussian4DGrad]) {
        let blocks: [(ParamId, usize, fn(&Gaussian4DGrad) -> &[f64]); 6] = [
            (self.mu, 4, |g| &g.mu),
            (self.log_scales, 4, |g| &g.log_scales),
            (self.q_l, 4, |g| &g.q_l),
            (self.q_r, 4, |g| &g.q_r),
            (self.opacity, 1, |g| std::slice::from_ref(&g.opacity_logit)),
            (self.color, 3, |g| &g.color),
        ];
        for (id, stride, get) in blocks {
            let dst = store.grads_mut(id);
            for (i, g) in grads.iter().enumerate() {
                for (d, s) in dst[i * stride..(i + 1) * stride].iter_mut().zip(get(g)) {
                    *d += s;
                }
            }
        }
    }

    pub fn normalize_rotations(&self, store: &mut ParamStore) {
        for id in [self.q_l, self.q_r] {
            for q in store.values_mut(id).chunks_exact_mut(4) {
                let n = quat::normalized([q[0], q[1], q[2], q[3]]);
                q.copy_from_slice(&n);
            }
        }
    }

    pub fn reshape(&self, store: &mut ParamStore, plan: &[RowPlan]) -> Result<()> {
        for (id, stride) in self.ids().into_iter().zip(GAUSS_STRIDES) {
            store.reshape_rows(id, stride, plan)?;
        }
        Ok(())
    }
}

/// Store entries holding one generated camera's extrinsics.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoseParams {
    pub view_id: String,
    pub q: ParamId,
    pub t: ParamId,
}

fn pose_names(view_id: &str) -> (String, String) {
    (format!("camera.gen.{view_id}.q"), format!("camera.gen.{view_id}.t"))
}

#[derive(Clone, Debug)]
pub struct Model {
    pub store: ParamStore,
    pub gaussians: GaussianParams,
    pub field: Option<DistortionField>,
    pub poses: Vec<PoseParams>,
    pub bounds: SceneBounds,
}

impl Model {
    /// Fresh model. Extrinsics are registered for every generated view in
    /// `views`, starting at their current values.
    pub fn new<R: Rng>(
        init: &[Gaussian4D],
        bounds: SceneBounds,
        views: &[CameraView],
        field: Option<(FieldConfig, PlaneInit)>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut store = ParamStore::new();
        let gaussians = GaussianParams::register(&mut store, init)?;
        let field = match field {
            Some((cfg, plane_init)) => Some(DistortionField::register(
                &mut store,
                FIELD_PREFIX,
                cfg,
                bounds,
                plane_init,
                rng,
            )?),
            None => None,
        };
        let mut poses = Vec::new();
        for v in views.iter().filter(|v| v.kind == ViewKind::Generated) {
            let (qn, tn) = pose_names(&v.id);
            poses.push(PoseParams {
                view_id: v.id.clone(),
                q: store.insert(qn, v.q_cam.to_vec())?,
                t: store.insert(tn, v.t_cam.to_vec())?,
            });
        }
        Ok(Self {
            store,
            gaussians,
            field,
            poses,
            bounds,
        })
    }

    pub fn canonical(&self) -> Vec<Gaussian4D> {
        self.gaussians.gather(&self.store)
    }

    pub fn pose_of(&self, view_id: &str) -> Option<&PoseParams> {
        self.poses.iter().find(|p| p.view_id == view_id)
    }

    /// `view` with extrinsics taken from the store when it is a tracked
    /// generated camera.
    pub fn posed_view(&self, view: &CameraView) -> CameraView {
        let mut out = view.clone();
        if let Some(p) = self.pose_of(&view.id) {
            let q = self.store.values(p.q);
            let t = self.store.values(p.t);
            out.q_cam = [q[0], q[1], q[2], q[3]];
            out.t_cam = [t[0], t[1], t[2]];
        }
        out
    }

    pub fn pose_ids(&self) -> Vec<ParamId> {
        self.poses.iter().flat_map(|p| [p.q, p.t]).collect()
    }

    pub fn normalize_poses(&mut self) {
        for p in &self.poses {
            let q = self.store.values_mut(p.q);
            let n = quat::normalized([q[0], q[1], q[2], q[3]]);
            q.copy_from_slice(&n);
        }
    }

    /// Drop the distortion field, keeping only what renders novel views.
    pub fn without_field(&self) -> Result<Model> {
        let mut store = ParamStore::new();
        for id in self.gaussians.ids() {
            let e = self.store.entry(id);
            store.insert(e.name(), e.values().to_vec())?;
        }
        let gaussians = GaussianParams::attach(&store)?;
        Ok(Model {
            store,
            gaussians,
            field: None,
            poses: Vec::new(),
            bounds: self.bounds,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = json!({
            "bounds": self.bounds,
            "field": self.field.as_ref().map(|f| f.header()),
            "poses": self.poses.iter().map(|p| p.view_id.clone()).collect::<Vec<_>>(),
        });
        Checkpoint::new(meta, self.store.clone())
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let bounds: SceneBounds = serde_json::from_value(ck.meta["bounds"].clone())?;
        let store = ck.store;
        let gaussians = GaussianParams::attach(&store)?;
        let field = match &ck.meta["field"] {
            serde_json::Value::Null => None,
            header => Some(DistortionField::attach(&store, FIELD_PREFIX, header)?),
        };
        let ids: Vec<String> = serde_json::from_value(ck.meta["poses"].clone())?;
        let mut poses = Vec::with_capacity(ids.len());
        for view_id in ids {
            let (qn, tn) = pose_names(&view_id);
            poses.push(PoseParams {
                q: store.id(&qn)?,
                t: store.id(&tn)?,
                view_id,
            });
        }
        Ok(Self {
            store,
            gaussians,
            field,
            poses,
            bounds,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }
}
