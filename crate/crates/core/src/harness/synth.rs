//! Synthetic dynamic scenes whose "generated" observations are corrupted by
//! a known smooth warp.

use nalgebra::{Matrix3, Matrix4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss4d::{factor_covariance, logit, quat, slice_at, Gaussian4D};
use crate::optimloop::{frame_time, TrainConfig, TrainView};
use crate::splat::{project_gaussian, render, CameraView, Image, Intrinsics, RenderOptions, ViewKind};
use crate::stdf::SceneBounds;

/// Where the injected warp acts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarpRegion {
    #[default]
    Everywhere,
    /// Only the half-space `x > 0`, with a short smooth ramp at the boundary.
    PositiveX,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistortionSpec {
    /// Target mean on-screen displacement of primitive centers in generated
    /// views, in pixels. The world amplitude is calibrated to hit it.
    pub mean_px: f64,
    /// Angular frequency of the sinusoids, per world unit.
    pub spatial_freq: f64,
    /// Phase advance per pose index; keeps the warp smooth along `s`.
    pub s_phase_step: f64,
    pub region: WarpRegion,
}

impl Default for DistortionSpec {
    fn default() -> Self {
        Self {
            mean_px: 2.0,
            spatial_freq: 1.5,
            s_phase_step: 0.35,
            region: WarpRegion::Everywhere,
        }
    }
}

/// Bounds on the error injected into the recorded extrinsics of generated cameras.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoseJitter {
    pub max_deg: f64,
    /// Fraction of the scene extent.
    pub max_frac: f64,
}

impl Default for PoseJitter {
    fn default() -> Self {
        Self {
            max_deg: 1.0,
            max_frac: 0.01,
        }
    }
}

/// One ring of cameras aimed at the origin, azimuths spread evenly over
/// `offset +- half_width`, degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    pub half_width_deg: f64,
    pub elevation_deg: f64,
    pub azimuth_offset_deg: f64,
}

impl Ring {
    fn at(half_width_deg: f64, elevation_deg: f64, azimuth_offset_deg: f64) -> Self {
        Self {
            half_width_deg,
            elevation_deg,
            azimuth_offset_deg,
        }
    }
}

/// The three groups sit at different elevations, so evaluation cameras never
/// coincide with training cameras.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigSpec {
    pub input: Ring,
    pub generated: Ring,
    pub eval: Ring,
}

impl Default for RigSpec {
    fn default() -> Self {
        Self {
            input: Ring::at(40.0, 5.0, 0.0),
            generated: Ring::at(50.0, 18.0, 0.0),
            eval: Ring::at(35.0, 11.0, 4.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_gaussians: usize,
    pub frames: usize,
    pub n_input_cams: usize,
    pub n_gen_cams: usize,
    pub n_eval_cams: usize,
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view in radians.
    pub fov_x: f64,
    pub camera_distance: f64,
    pub rig: RigSpec,
    /// Largest primitive speed, world units per frame. Motion is linear in
    /// time, encoded in the space-time tilt of each 4D covariance.
    pub max_speed: f64,
    /// Evaluation cameras observe every `eval_frame_stride`-th frame.
    pub eval_frame_stride: usize,
    pub distortion: DistortionSpec,
    pub gen_pose_jitter: PoseJitter,
    pub train_iters: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_gaussians: 60,
            frames: 12,
            n_input_cams: 3,
            n_gen_cams: 6,
            n_eval_cams: 6,
            width: 64,
            height: 64,
            fov_x: 0.9,
            camera_distance: 4.0,
            rig: RigSpec::default(),
            max_speed: 0.02,
            eval_frame_stride: 3,
            distortion: DistortionSpec::default(),
            gen_pose_jitter: PoseJitter::default(),
            train_iters: 4000,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_gaussians", self.n_gaussians),
            ("frames", self.frames),
            ("n_input_cams", self.n_input_cams),
            ("n_gen_cams", self.n_gen_cams),
            ("eval_frame_stride", self.eval_frame_stride),
            ("train_iters", self.train_iters),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.width < 11 || self.height < 11 {
            return Err(Error::Config("images must be at least 11x11 for SSIM".into()));
        }
        let reals = [
            self.fov_x,
            self.camera_distance,
            self.max_speed,
            self.distortion.mean_px,
            self.distortion.spatial_freq,
            self.gen_pose_jitter.max_deg,
            self.gen_pose_jitter.max_frac,
        ];
        if reals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || self.fov_x <= 0.0 {
            return Err(Error::Config("spec values must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Default training constants scaled to this spec's iteration budget.
    pub fn train_config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::default().scaled_to(self.train_iters);
        cfg.seed = self.seed;
        cfg
    }
}

/// Sum of three axis sinusoids: `D(x; t, s)_j = A w(x) sin(f k_j . x + phi_j(t) + (j+1) s c)`,
/// with unit directions `k_j`, per-frame random phases `phi_j(t)` (abrupt in
/// `t`), a linear phase in the pose index (smooth in `s`) and region weight `w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Warp {
    pub amplitude: f64,
    pub freq: f64,
    pub dirs: [[f64; 3]; 3],
    pub frame_phase: Vec<[f64; 3]>,
    pub s_phase_step: f64,
    pub region: WarpRegion,
}

const REGION_RAMP: f64 = 0.05;

impl Warp {
    fn random<R: Rng>(spec: &DistortionSpec, frames: usize, rng: &mut R) -> Self {
        let dirs = std::array::from_fn(|_| {
            let v = random_direction(rng);
            [v[0], v[1], v[2]]
        });
        let frame_phase = (0..frames)
            .map(|_| std::array::from_fn(|_| rng.random_range(0.0..std::f64::consts::TAU)))
            .collect();
        Self {
            amplitude: 1.0,
            freq: spec.spatial_freq,
            dirs,
            frame_phase,
            s_phase_step: spec.s_phase_step,
            region: spec.region,
        }
    }

    pub fn region_weight(&self, x: [f64; 3]) -> f64 {
        match self.region {
            WarpRegion::Everywhere => 1.0,
            WarpRegion::PositiveX => crate::gauss4d::sigmoid(x[0] / REGION_RAMP),
        }
    }

    pub fn displacement(&self, x: [f64; 3], t_index: usize, s_index: usize) -> [f64; 3] {
        let w = self.amplitude * self.region_weight(x);
        std::array::from_fn(|j| {
            let k = self.dirs[j];
            let arg = self.freq * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2])
                + self.frame_phase[t_index][j]
                + (j + 1) as f64 * s_index as f64 * self.s_phase_step;
            w * arg.sin()
        })
    }
}

/// A synthetic capture: ground truth, the trainer's initialization and every
/// observed view with its target image.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: SynthSpec,
    pub bounds: SceneBounds,
    pub truth: Vec<Gaussian4D>,
    pub init: Vec<Gaussian4D>,
    pub warp: Warp,
    pub views: Vec<TrainView>,
    /// Physical camera index of each view, used for file paths and layouts.
    pub camera_index: Vec<usize>,
}

impl Dataset {
    pub fn split(&self, kind: ViewKind) -> Vec<&TrainView> {
        self.views.iter().filter(|v| v.view.kind == kind).collect()
    }

    pub fn training_views(&self) -> Vec<TrainView> {
        self.views
            .iter()
            .filter(|v| v.view.kind != ViewKind::Eval)
            .cloned()
            .collect()
    }

    pub fn find(&self, id: &str) -> Option<&TrainView> {
        self.views.iter().find(|v| v.view.id == id)
    }
}

pub fn view_id(kind: ViewKind, camera: usize, t_index: usize) -> String {
    match kind {
        ViewKind::Generated => format!("gen-s{camera}-t{t_index}"),
        other => format!("{}-c{camera}-t{t_index}", other.label()),
    }
}

/// Ground-truth renders use exact per-pixel evaluation.
pub const TRUTH_RENDER: RenderOptions = RenderOptions { cutoff_sigma: None };

fn ring_eye(distance: f64, azimuth_deg: f64, elevation_deg: f64) -> [f64; 3] {
    let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    // world "up" is -y, matching the image's y-down convention
    [
        distance * az.sin() * el.cos(),
        -distance * el.sin(),
        -distance * az.cos() * el.cos(),
    ]
}

fn spread(n: usize, half_width: f64) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n)
        .map(|i| -half_width + 2.0 * half_width * i as f64 / (n - 1) as f64)
        .collect()
}

/// Camera rig: `(kind, camera index, azimuth, elevation)` in degrees.
pub fn rig(spec: &SynthSpec) -> Vec<(ViewKind, usize, f64, f64)> {
    let groups = [
        (ViewKind::Input, spec.n_input_cams, spec.rig.input),
        (ViewKind::Generated, spec.n_gen_cams, spec.rig.generated),
        (ViewKind::Eval, spec.n_eval_cams, spec.rig.eval),
    ];
    groups
        .into_iter()
        .flat_map(|(kind, n, ring)| {
            spread(n, ring.half_width_deg)
                .into_iter()
                .enumerate()
                .map(move |(i, az)| (kind, i, az + ring.azimuth_offset_deg, ring.elevation_deg))
        })
        .collect()
}

fn random_direction<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::<f64>::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn random_rotation3<R: Rng>(rng: &mut R) -> Matrix3<f64> {
    let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    quat::to_matrix(quat::normalized([q[0] + 1e-3, q[1], q[2], q[3]]))
}

fn ground_truth<R: Rng>(spec: &SynthSpec, rng: &mut R) -> Result<Vec<Gaussian4D>> {
    let last = (spec.frames - 1) as f64;
    (0..spec.n_gaussians)
        .map(|_| {
            let c: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.8..0.8));
            let t_c = rng.random_range(0.0..=last.max(0.0));
            let rot = random_rotation3(rng);
            let scales = Vector3::from_fn(|_, _| rng.random_range(0.06f64.ln()..0.18f64.ln()).exp());
            let a = rot * Matrix3::from_diagonal(&scales.component_mul(&scales)) * rot.transpose();
            let v = random_direction(rng) * rng.random_range(0.0..=spec.max_speed);
            let var_t = rng.random_range(6.0f64..12.0).powi(2);
            let mut sigma = Matrix4::zeros();
            sigma.fixed_view_mut::<3, 3>(0, 0).copy_from(&(a + v * v.transpose() * var_t));
            sigma.fixed_view_mut::<3, 1>(0, 3).copy_from(&(v * var_t));
            sigma.fixed_view_mut::<1, 3>(3, 0).copy_from(&(v.transpose() * var_t));
            sigma[(3, 3)] = var_t;
            let (log_scales, q_l, q_r) = factor_covariance(&sigma)?;
            Ok(Gaussian4D {
                mu: [c[0], c[1], c[2], t_c],
                log_scales,
                q_l,
                q_r,
                opacity_logit: rng.random_range(0.5..3.0),
                color: std::array::from_fn(|_| rng.random_range(0.1..0.95)),
            })
        })
        .collect()
}

/// What the trainer starts from: jittered ground-truth centers (a stand-in
/// for a structure-from-motion point cloud), grey, isotropic, static and
/// half transparent.
fn initial_guess<R: Rng>(truth: &[Gaussian4D], frames: usize, rng: &mut R) -> Vec<Gaussian4D> {
    let mid = 0.5 * (frames - 1) as f64;
    truth
        .iter()
        .map(|g| {
            let mu = [
                g.mu[0] + rng.random_range(-0.05..0.05),
                g.mu[1] + rng.random_range(-0.05..0.05),
                g.mu[2] + rng.random_range(-0.05..0.05),
                mid,
            ];
            let mut out = Gaussian4D::isotropic(mu, 0.12f64.ln(), [0.5; 3]);
            out.log_scales[3] = (frames as f64).ln();
            out.opacity_logit = logit(0.5);
            out
        })
        .collect()
}

fn bounds_for(init: &[Gaussian4D], frames: usize, n_gen: usize) -> Result<SceneBounds> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for g in init {
        for a in 0..3 {
            lo[a] = lo[a].min(g.mu[a]);
            hi[a] = hi[a].max(g.mu[a]);
        }
    }
    let pad = 0.3;
    SceneBounds::new(lo.map(|v| v - pad), hi.map(|v| v + pad), frames, n_gen.max(1))
}

fn jitter_pose<R: Rng>(q: [f64; 4], t: [f64; 3], jitter: &PoseJitter, extent: f64, rng: &mut R) -> ([f64; 4], [f64; 3]) {
    let axis = random_direction(rng);
    let angle = rng.random_range(0.0..=jitter.max_deg).to_radians();
    let dq = quat::from_axis_angle([axis[0], axis[1], axis[2]], angle);
    let dir = random_direction(rng) * rng.random_range(0.0..=jitter.max_frac) * extent;
    (quat::normalized(quat::mul(dq, q)), [t[0] + dir[0], t[1] + dir[1], t[2] + dir[2]])
}

/// Mean on-screen center displacement the warp causes over generated views.
pub fn mean_pixel_displacement(truth: &[Gaussian4D], warp: &Warp, views: &[CameraView]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for v in views.iter().filter(|v| v.kind == ViewKind::Generated) {
        let s = v.s_index.unwrap_or(0);
        for g in truth {
            let sl = slice_at(g, frame_time(v.t_index))?;
            let c = [sl.mean3[0], sl.mean3[1], sl.mean3[2]];
            let d = warp.displacement(c, v.t_index, s);
            let mut moved = sl;
            moved.mean3 += Vector3::from(d);
            if let (Some(a), Some(b)) = (project_gaussian(v, &sl), project_gaussian(v, &moved)) {
                total += ((a.mean2[0] - b.mean2[0]).powi(2) + (a.mean2[1] - b.mean2[1]).powi(2)).sqrt();
                count += 1;
            }
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Ground-truth frame `t` with the warp applied to every sliced center.
pub fn render_warped(truth: &[Gaussian4D], warp: Option<&Warp>, view: &CameraView) -> Result<Image> {
    let t = view.t_index;
    let s = view.s_index.unwrap_or(0);
    let slices = truth
        .iter()
        .map(|g| {
            let mut sl = slice_at(g, frame_time(t))?;
            if let Some(w) = warp {
                let d = w.displacement([sl.mean3[0], sl.mean3[1], sl.mean3[2]], t, s);
                sl.mean3 += Vector3::from(d);
            }
            Ok(sl)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(render(view, &slices, None, &TRUTH_RENDER)?.color.quantized_f32())
}

/// Build the scene, cameras and target images for `spec`.
pub fn synth(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let truth = ground_truth(spec, &mut rng)?;
    let init = initial_guess(&truth, spec.frames, &mut rng);
    let bounds = bounds_for(&init, spec.frames, spec.n_gen_cams)?;
    let mut warp = Warp::random(&spec.distortion, spec.frames, &mut rng);
    let k = Intrinsics::from_fov(spec.width, spec.height, spec.fov_x);

    // (true camera, recorded camera, physical index)
    let mut cams: Vec<(CameraView, CameraView, usize)> = Vec::new();
    for (kind, idx, az, el) in rig(spec) {
        let (q, t) = CameraView::look_at(ring_eye(spec.camera_distance, az, el), [0.0; 3], [0.0, -1.0, 0.0]);
        let (rq, rt) = if kind == ViewKind::Generated {
            jitter_pose(q, t, &spec.gen_pose_jitter, bounds.extent(), &mut rng)
        } else {
            (q, t)
        };
        let frames: Vec<usize> = match kind {
            ViewKind::Eval => (0..spec.frames).step_by(spec.eval_frame_stride).collect(),
            _ => (0..spec.frames).collect(),
        };
        let s_index = (kind == ViewKind::Generated).then_some(idx);
        for t_index in frames {
            let id = view_id(kind, idx, t_index);
            let truth_view = CameraView::new(&id, k, q, t, kind, t_index, s_index)?;
            let recorded = CameraView::new(&id, k, rq, rt, kind, t_index, s_index)?;
            cams.push((truth_view, recorded, idx));
        }
    }

    let truth_views: Vec<CameraView> = cams.iter().map(|c| c.0.clone()).collect();
    if spec.distortion.mean_px > 0.0 {
        let unit = mean_pixel_displacement(&truth, &warp, &truth_views)?;
        warp.amplitude = if unit > 0.0 { spec.distortion.mean_px / unit } else { 0.0 };
    } else {
        warp.amplitude = 0.0;
    }

    let targets = cams
        .par_iter()
        .map(|(truth_view, _, _)| {
            let w = (truth_view.kind == ViewKind::Generated).then_some(&warp);
            render_warped(&truth, w, truth_view)
        })
        .collect::<Result<Vec<_>>>()?;
    let camera_index = cams.iter().map(|c| c.2).collect();
    let views = cams
        .into_iter()
        .zip(targets)
        .map(|((_, recorded, _), target)| TrainView { view: recorded, target })
        .collect();
    Ok(Dataset {
        spec: spec.clone(),
        bounds,
        truth,
        init,
        warp,
        views,
        camera_index,
    })
}

/// Linearized flow magnitude between two renders: `sum |b - a| / sum |grad a|`
/// over channels. Proportional to the mean displacement while it is small
/// against the texture scale.
pub fn flow_proxy(a: &Image, b: &Image) -> Result<f64> {
    a.check_shape(b)?;
    let (w, h, c) = (a.width(), a.height(), a.channels());
    let (mut diff, mut grad) = (0.0, 0.0);
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            for ch in 0..c {
                let v = a.get(x, y, ch);
                diff += (b.get(x, y, ch) - v).abs();
                grad += ((a.get(x + 1, y, ch) - v).powi(2) + (a.get(x, y + 1, ch) - v).powi(2)).sqrt();
            }
        }
    }
    Ok(if grad > 0.0 { diff / grad } else { 0.0 })
}
