//! Test-view pose refinement against a frozen model.

use serde::{Deserialize, Serialize};

use crate::diffcore::{AdamConfig, ParamStore};
use crate::error::Result;
use crate::gauss4d::{quat, Gaussian4D};
use crate::splat::{render, render_backward, CameraView, Image, RenderOptions, RenderUpstream};

use super::losses::l1_loss;
use super::train::{frame_time, slice_all};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignOptions {
    pub iters: usize,
    pub lr_rotation: f64,
    /// Multiplied by the scene extent.
    pub lr_translation: f64,
    pub extent: f64,
    pub render: RenderOptions,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self {
            iters: 500,
            lr_rotation: 1e-3,
            lr_translation: 1e-3,
            extent: 1.0,
            render: RenderOptions {
                cutoff_sigma: Some(3.0),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlignOutcome {
    pub q_cam: [f64; 4],
    pub t_cam: [f64; 3],
    pub initial_loss: f64,
    /// Loss at the returned extrinsics.
    pub final_loss: f64,
    pub evaluations: usize,
    /// Stopped after ten consecutive loss increases.
    pub diverged: bool,
}

const PATIENCE: usize = 10;

/// Minimize the L1 photometric loss of `view` against `target` over its
/// extrinsics only. The best pose seen is returned.
pub fn align_test_pose(
    gaussians: &[Gaussian4D],
    view: &CameraView,
    target: &Image,
    opts: &AlignOptions,
) -> Result<AlignOutcome> {
    let slices = slice_all(gaussians, frame_time(view.t_index))?;
    let mut store = ParamStore::new();
    let qid = store.insert("q", view.q_cam.to_vec())?;
    let tid = store.insert("t", view.t_cam.to_vec())?;
    let adam = AdamConfig::default();
    let mut cur = view.clone();
    let mut best = (f64::INFINITY, view.q_cam, view.t_cam);
    let mut initial = f64::NAN;
    let (mut prev, mut rising, mut diverged, mut evals) = (f64::INFINITY, 0, false, 0);

    for i in 0..=opts.iters {
        let q = store.values(qid);
        cur.q_cam = [q[0], q[1], q[2], q[3]];
        let t = store.values(tid);
        cur.t_cam = [t[0], t[1], t[2]];
        let out = render(&cur, &slices, None, &opts.render)?;
        let loss = l1_loss(&out.color, target)?;
        evals += 1;
        if i == 0 {
            initial = loss.value;
        }
        if loss.value < best.0 {
            best = (loss.value, cur.q_cam, cur.t_cam);
        }
        rising = if loss.value > prev { rising + 1 } else { 0 };
        prev = loss.value;
        if rising >= PATIENCE {
            log::warn!("pose alignment of `{}` diverging at step {i}; keeping the best pose", view.id);
            diverged = true;
            break;
        }
        if i == opts.iters {
            break;
        }
        let up = RenderUpstream {
            color: &loss.grad,
            alpha: None,
            attribute: None,
        };
        let g = render_backward(&cur, &slices, None, &opts.render, &up)?.pose;
        store.zero_grads();
        store.grads_mut(qid).copy_from_slice(&g.q);
        store.grads_mut(tid).copy_from_slice(&g.t);
        store.adam_step_entry(qid, opts.lr_rotation, &adam)?;
        store.adam_step_entry(tid, opts.lr_translation * opts.extent, &adam)?;
        let q = store.values_mut(qid);
        let n = quat::normalized([q[0], q[1], q[2], q[3]]);
        q.copy_from_slice(&n);
    }
    Ok(AlignOutcome {
        q_cam: best.1,
        t_cam: best.2,
        initial_loss: initial,
        final_loss: best.0,
        evaluations: evals,
        diverged,
    })
}
