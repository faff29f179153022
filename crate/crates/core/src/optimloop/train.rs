//! The optimization loop: one input view and one generated view per step.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{ParamId, RowPlan};
use crate::error::{Error, Result};
use crate::gauss4d::{densify_prune, slice_at, slice_backward, Gaussian4D, Gaussian4DGrad, GradStats, Sliced3D};
use crate::splat::{render, render_backward, CameraView, Image, PoseGrad, RenderUpstream, ViewKind};
use crate::stdf::{apply_distortion, apply_distortion_backward, SceneBounds};

use super::config::TrainConfig;
use super::losses::{gen_view_loss, input_view_loss, pose_loss_single, ImageDistance, ImageLoss};
use super::model::Model;

/// A camera with the image it should reproduce.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainView {
    pub view: CameraView,
    pub target: Image,
}

/// Per-iteration loss components.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub input: f64,
    pub generated: f64,
    pub pose: f64,
    pub tv: f64,
    pub smooth: f64,
}

impl LossBreakdown {
    /// Sum in a fixed order.
    pub fn total(&self) -> f64 {
        self.input + self.generated + self.pose + self.tv + self.smooth
    }
}

pub const LOG_HEADER: &str = "iter\tL_input\tL_gen\tL_pose\tL_TV\tL_smooth\ttotal\tlr_position\tlr_planes\tlr_mlp\tlr_camera";

/// Uniform sampling without replacement inside shuffled epochs.
#[derive(Clone, Debug)]
struct EpochSampler {
    items: Vec<usize>,
    order: Vec<usize>,
    pos: usize,
}

impl EpochSampler {
    fn new(items: Vec<usize>) -> Self {
        let pos = items.len();
        Self {
            order: items.clone(),
            items,
            pos,
        }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.pos == self.order.len() {
            self.order.clone_from(&self.items);
            self.order.shuffle(rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

/// Time coordinate of frame `t_index`.
pub fn frame_time(t_index: usize) -> f64 {
    t_index as f64
}

pub(crate) fn slice_all(gaussians: &[Gaussian4D], t: f64) -> Result<Vec<Sliced3D>> {
    gaussians.iter().map(|g| slice_at(g, t)).collect()
}

/// Render `view` from `gaussians`, push `loss.grad` back and return
/// per-primitive gradients plus the pose gradient.
fn backprop_view(
    view: &CameraView,
    gaussians: &[Gaussian4D],
    slices: &[Sliced3D],
    loss: &ImageLoss,
    cfg: &TrainConfig,
) -> Result<(Vec<Gaussian4DGrad>, PoseGrad)> {
    let up = RenderUpstream {
        color: &loss.grad,
        alpha: None,
        attribute: None,
    };
    let rg = render_backward(view, slices, None, &cfg.render, &up)?;
    let t = frame_time(view.t_index);
    let grads = gaussians
        .iter()
        .zip(&rg.slices)
        .map(|(g, sg)| slice_backward(g, t, sg).map(|(gg, _)| gg))
        .collect::<Result<Vec<_>>>()?;
    Ok((grads, rg.pose))
}

pub struct Trainer<'a> {
    cfg: TrainConfig,
    model: Model,
    views: &'a [TrainView],
    perceptual: &'a dyn ImageDistance,
    rng: ChaCha8Rng,
    inputs: EpochSampler,
    generated: EpochSampler,
    stats: GradStats,
    iter: usize,
    log: String,
}

impl<'a> Trainer<'a> {
    /// Build a fresh model from `init` and prepare the samplers.
    pub fn new(
        init: &[Gaussian4D],
        bounds: SceneBounds,
        views: &'a [TrainView],
        cfg: &TrainConfig,
        perceptual: &'a dyn ImageDistance,
    ) -> Result<Self> {
        cfg.validate()?;
        let pick = |k: ViewKind| -> Vec<usize> { (0..views.len()).filter(|&i| views[i].view.kind == k).collect() };
        let (inputs, generated) = (pick(ViewKind::Input), pick(ViewKind::Generated));
        if inputs.is_empty() || generated.is_empty() {
            return Err(Error::Config("training needs at least one input and one generated view".into()));
        }
        for v in views {
            if v.target.width() != v.view.width() || v.target.height() != v.view.height() || v.target.channels() != 3 {
                return Err(Error::ShapeMismatch(format!("target of view `{}` does not match its camera", v.view.id)));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let cams: Vec<CameraView> = views.iter().map(|v| v.view.clone()).collect();
        let field = cfg.variant.use_field.then(|| (cfg.field.clone(), cfg.plane_init));
        let model = Model::new(init, bounds, &cams, field, &mut rng)?;
        let n = init.len();
        Ok(Self {
            cfg: cfg.clone(),
            model,
            views,
            perceptual,
            rng,
            inputs: EpochSampler::new(inputs),
            generated: EpochSampler::new(generated),
            stats: GradStats::new(n),
            iter: 0,
            log: format!("{LOG_HEADER}\n"),
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    /// Tab-separated loss log, header first.
    pub fn log(&self) -> &str {
        &self.log
    }

    pub fn run(&mut self) -> Result<()> {
        while self.iter < self.cfg.schedule.total_iters {
            self.step()?;
        }
        Ok(())
    }

    /// One optimization step; returns its loss breakdown.
    pub fn step(&mut self) -> Result<LossBreakdown> {
        let iter = self.iter;
        let sched = self.cfg.schedule;
        let warm = sched.in_warmup(iter);
        let variant = self.cfg.variant;
        let iv = &self.views[self.inputs.next(&mut self.rng)];
        let gv = &self.views[self.generated.next(&mut self.rng)];

        self.model.store.zero_grads();
        let gen_views: Vec<&CameraView> = self
            .views
            .iter()
            .filter(|v| v.view.kind == ViewKind::Generated)
            .map(|v| &v.view)
            .collect();
        let (parts, grads) = objective(&mut self.model, iv, gv, &gen_views, &self.cfg, self.perceptual, warm)?;

        let total = parts.total();
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss {
                iter,
                breakdown: format!("{parts:?}"),
            });
        }

        for (i, g) in grads.iter().enumerate() {
            self.stats.record(i, (g.mu[0] * g.mu[0] + g.mu[1] * g.mu[1] + g.mu[2] * g.mu[2]).sqrt());
        }

        let lr = self.learning_rates(iter);
        let adam = self.cfg.adam;
        let gp = self.model.gaussians;
        let group: [(ParamId, f64); 6] = [
            (gp.mu, lr.position),
            (gp.log_scales, self.cfg.lrs.log_scales),
            (gp.q_l, self.cfg.lrs.rotation),
            (gp.q_r, self.cfg.lrs.rotation),
            (gp.opacity, self.cfg.lrs.opacity),
            (gp.color, self.cfg.lrs.color),
        ];
        for (id, rate) in group {
            self.model.store.adam_step_entry(id, rate, &adam)?;
        }
        if !warm {
            if let Some(field) = &self.model.field {
                for &id in field.planes().ids() {
                    self.model.store.adam_step_entry(id, lr.planes, &adam)?;
                }
                for id in field.mlp_ids() {
                    self.model.store.adam_step_entry(id, lr.mlp, &adam)?;
                }
            }
        }
        if variant.use_pose_opt && sched.pose_active(iter) {
            for p in self.model.poses.clone() {
                self.model.store.adam_step_entry(p.q, self.cfg.lrs.camera_rotation, &adam)?;
                self.model.store.adam_step_entry(p.t, lr.camera_translation, &adam)?;
            }
            self.model.normalize_poses();
        }
        gp.normalize_rotations(&mut self.model.store);

        if sched.densify_due(iter) {
            self.densify()?;
        }

        writeln!(
            self.log,
            "{iter}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}",
            parts.input,
            parts.generated,
            parts.pose,
            parts.tv,
            parts.smooth,
            total,
            lr.position,
            lr.planes,
            lr.mlp,
            lr.camera_translation
        )
        .expect("writing to a String");
        self.iter += 1;
        Ok(parts)
    }

    fn learning_rates(&self, iter: usize) -> StepRates {
        let extent = self.model.bounds.extent();
        let l = &self.cfg.lrs;
        StepRates {
            position: l.position.lr_at(iter) * extent,
            planes: l.planes.lr_at(iter),
            mlp: l.mlp.lr_at(iter),
            camera_translation: l.camera_translation * extent,
        }
    }

    fn densify(&mut self) -> Result<()> {
        let current = self.model.canonical();
        let outcome = densify_prune(&current, &self.stats, &self.cfg.densify, &mut self.rng);
        if outcome.pruned > 0 || outcome.cloned > 0 {
            log::debug!(
                "iter {}: pruned {}, cloned {}, now {}",
                self.iter,
                outcome.pruned,
                outcome.cloned,
                outcome.gaussians.len()
            );
        }
        let plan: Vec<RowPlan> = outcome
            .sources
            .iter()
            .map(|&(source, fresh_state)| RowPlan { source, fresh_state })
            .collect();
        let gp = self.model.gaussians;
        gp.reshape(&mut self.model.store, &plan)?;
        // clones carry their jittered means
        let mu = self.model.store.values_mut(gp.mu);
        for (row, g) in outcome.gaussians.iter().enumerate() {
            mu[4 * row..4 * row + 4].copy_from_slice(&g.mu);
        }
        self.stats = GradStats::new(outcome.gaussians.len());
        Ok(())
    }
}

/// Evaluate the loss of one step at the current parameters and accumulate
/// every gradient (Gaussians, field, extrinsics) into `model.store`.
/// `pose_views` are the generated cameras covered by the pose term.
pub fn objective(
    model: &mut Model,
    iv: &TrainView,
    gv: &TrainView,
    pose_views: &[&CameraView],
    cfg: &TrainConfig,
    perceptual: &dyn ImageDistance,
    warm: bool,
) -> Result<(LossBreakdown, Vec<Gaussian4DGrad>)> {
    let w = cfg.weights;
    let variant = cfg.variant;
    let mut parts = LossBreakdown::default();
    let canonical = model.canonical();
    let n = canonical.len();
    let mut grads = vec![Gaussian4DGrad::default(); n];

    // Real views always see the canonical primitives.
    let slices = slice_all(&canonical, frame_time(iv.view.t_index))?;
    let out = render(&iv.view, &slices, None, &cfg.render)?;
    let loss = input_view_loss(&out.color, &iv.target, &w)?;
    parts.input = loss.value;
    let (g_in, _) = backprop_view(&iv.view, &canonical, &slices, &loss, cfg)?;
    grads.iter_mut().zip(&g_in).for_each(|(a, b)| a.add_assign(b));

    if !warm {
        let view = if variant.use_pose_opt {
            model.posed_view(&gv.view)
        } else {
            gv.view.clone()
        };
        let s_index = view.s_index.ok_or_else(|| Error::Config(format!("view `{}` has no pose index", view.id)))?;
        let queried = match &model.field {
            Some(field) => Some(field.query_all(&model.store, &canonical, view.t_index, s_index)?),
            None => None,
        };
        let distorted: Vec<Gaussian4D> = match &queried {
            Some(q) => canonical
                .iter()
                .zip(q)
                .map(|(g, (d, _))| apply_distortion(g, d))
                .collect::<Result<_>>()?,
            None => canonical.clone(),
        };
        let slices = slice_all(&distorted, frame_time(view.t_index))?;
        let out = render(&view, &slices, None, &cfg.render)?;
        let loss = gen_view_loss(&out.color, &gv.target, &w, perceptual)?;
        parts.generated = loss.value;
        let (g_gen, g_pose) = backprop_view(&view, &distorted, &slices, &loss, cfg)?;
        match (&model.field, &queried) {
            (Some(field), Some(q)) => {
                for (i, (g, (d, tape))) in canonical.iter().zip(q).enumerate() {
                    let (g_canon, g_delta) = apply_distortion_backward(g, d, &g_gen[i]);
                    grads[i].add_assign(&g_canon);
                    let gc = field.query_backward(&mut model.store, tape, &g_delta);
                    for k in 0..3 {
                        grads[i].mu[k] += gc[k];
                    }
                }
            }
            _ => grads.iter_mut().zip(&g_gen).for_each(|(a, b)| a.add_assign(b)),
        }

        if variant.use_pose_opt {
            if let Some(p) = model.pose_of(&view.id).cloned() {
                add_into(model.store.grads_mut(p.q), &g_pose.q);
                add_into(model.store.grads_mut(p.t), &g_pose.t);
            }
            for v in pose_views {
                let Some(p) = model.pose_of(&v.id).cloned() else { continue };
                let posed = model.posed_view(v);
                let pl = pose_loss_single(&posed, w.lambda_p);
                parts.pose += pl.value;
                add_into(model.store.grads_mut(p.q), &pl.grad_q);
                add_into(model.store.grads_mut(p.t), &pl.grad_t);
            }
        }
        if variant.use_smooth {
            if let Some(field) = &model.field {
                parts.smooth = field.planes().smooth_loss(&mut model.store, w.lambda_s);
            }
        }
    }
    if let Some(field) = &model.field {
        parts.tv = w.tv_weight * field.planes().tv_loss(&mut model.store, w.tv_weight);
    }

    model.gaussians.accumulate(&mut model.store, &grads);
    Ok((parts, grads))
}

struct StepRates {
    position: f64,
    planes: f64,
    mlp: f64,
    camera_translation: f64,
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

/// A finished run: the trained model and its loss log.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: String,
}

/// Run the full schedule from `init`.
pub fn train(
    init: &[Gaussian4D],
    bounds: SceneBounds,
    views: &[TrainView],
    cfg: &TrainConfig,
    perceptual: &dyn ImageDistance,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(init, bounds, views, cfg, perceptual)?;
    trainer.run()?;
    let log = trainer.log().to_string();
    Ok(TrainOutcome {
        model: trainer.into_model(),
        log,
    })
}
