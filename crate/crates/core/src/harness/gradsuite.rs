//! Finite-difference checks of every differentiable operation on random
//! inputs, as run by the `gradcheck` command.

use std::fmt::Write as _;

use nalgebra::{Matrix2, Matrix3, Matrix4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{grad_check, grad_check_fn, GradReport, ParamStore};
use crate::error::Result;
use crate::featplanes::{
    fuse, fuse_backward, plane_interp, plane_interp_backward, Axis, PlaneInit, PlaneLayout, PlaneSet, PlaneSetConfig,
};
use crate::gauss4d::{
    covariance4d, covariance4d_backward, quat, rotation_from_pair, rotation_from_pair_backward, slice_at,
    slice_backward, Gaussian4D, Gaussian4DGrad, Sliced3D, SlicedGrad,
};
use crate::optimloop::{dssim_loss, gen_view_loss, input_view_loss, pose_loss_single, GradientL1, LossWeights};
use crate::splat::{
    project_backward, project_with, render, render_backward, CameraView, Image, Intrinsics, RenderOptions,
    RenderUpstream, ViewKind,
};
use crate::stdf::{apply_distortion, apply_distortion_backward, Distortion, DistortionField, FieldConfig, SceneBounds};

/// Finite-difference step used throughout.
pub const STEP: f64 = 1e-5;
/// Largest accepted relative error.
pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub op: String,
    pub seeds: u64,
    pub max_rel_err: f64,
    /// Seed and entry of the worst probe.
    pub worst: Option<(u64, String)>,
}

impl SuiteRow {
    pub fn passes(&self) -> bool {
        self.max_rel_err < TOLERANCE
    }
}

pub type Check = fn(u64) -> Result<GradReport>;

pub const OPERATIONS: [(&str, Check); 16] = [
    ("plane_interp", check_plane_interp),
    ("fuse", check_fuse),
    ("multiscale_feature", check_multiscale),
    ("field_query", check_field_query),
    ("apply_distortion", check_apply_distortion),
    ("rotation4d", check_rotation),
    ("covariance4d", check_covariance),
    ("slice", check_slice),
    ("project", check_project),
    ("render", check_render),
    ("loss_input", check_input_loss),
    ("loss_dssim", check_dssim),
    ("loss_generated", check_gen_loss),
    ("loss_pose", check_pose_loss),
    ("loss_tv", check_tv),
    ("loss_smooth", check_smooth),
];

/// Run every check on seeds `0..seeds`.
pub fn gradient_suite(seeds: u64) -> Result<Vec<SuiteRow>> {
    OPERATIONS
        .iter()
        .map(|(name, check)| {
            let mut row = SuiteRow {
                op: name.to_string(),
                seeds,
                max_rel_err: 0.0,
                worst: None,
            };
            for seed in 0..seeds {
                let r = check(seed)?;
                if r.max_rel_err >= row.max_rel_err {
                    row.max_rel_err = r.max_rel_err;
                    row.worst = r.worst.map(|p| (seed, format!("{}[{}]", p.entry, p.index)));
                }
            }
            Ok(row)
        })
        .collect()
}

pub fn suite_table(rows: &[SuiteRow]) -> String {
    let mut out = format!("{:<20}  {:>5}  {:>12}  result\n", "operation", "seeds", "max rel err");
    for r in rows {
        let verdict = if r.passes() { "pass" } else { "FAIL" };
        writeln!(out, "{:<20}  {:>5}  {:>12.3e}  {verdict}", r.op, r.seeds, r.max_rel_err).expect("writing to a String");
    }
    out
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn weights<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit_quat<R: Rng>(rng: &mut R) -> [f64; 4] {
    quat::normalized(std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
}

fn random_gaussian<R: Rng>(rng: &mut R) -> Gaussian4D {
    Gaussian4D {
        mu: std::array::from_fn(|_| rng.random_range(-0.5..0.5)),
        log_scales: std::array::from_fn(|_| rng.random_range(-1.5..0.0)),
        q_l: unit_quat(rng),
        q_r: unit_quat(rng),
        opacity_logit: rng.random_range(-1.0..1.0),
        color: std::array::from_fn(|_| rng.random_range(0.0..1.0)),
    }
}

fn pack_geometry(g: &Gaussian4D) -> Vec<f64> {
    [g.mu, g.log_scales, g.q_l, g.q_r].concat()
}

fn four(x: &[f64]) -> [f64; 4] {
    [x[0], x[1], x[2], x[3]]
}

fn check_plane_interp(seed: u64) -> Result<GradReport> {
    let mut rng = rng(seed);
    let layout = PlaneLayout::new((Axis::X, Axis::T), (4, 3), 2, 3)?;
    let n = layout.len();
    let w = weights(&mut rng, 3);
    let mut x = weights(&mut rng, n);
    x.extend([rng.random_range(0.1..6.9), rng.random_range(0.1..4.9)]);
    grad_check_fn(&x, STEP, |x| {
        let mut out = vec![0.0; 3];
        plane_interp(&layout, &x[..n], [x[n], x[n + 1]], &mut out);
        let mut g = vec![0.0; n + 2];
        let gp = plane_interp_backward(&layout, &x[..n], [x[n], x[n + 1]], &w, &mut g[..n]);
        g[n..].copy_from_slice(&gp);
        Ok((dot(&out, &w), g))
    })
}

fn check_fuse(seed: u64) -> Result<GradReport> {
    let mut rng = rng(seed);
    let x: Vec<f64> = (0..9 * 4).map(|_| rng.random_range(-2.0..2.0)).collect();
    let w = weights(&mut rng, 4);
    grad_check_fn(&x, STEP, |x| {
        let refs: Vec<&[f64]> = x.chunks(4).collect();
        Ok((dot(&fuse(&refs)?, &w), fuse_backward(&refs, &w).concat()))
    })
}

fn small_planes(store: &mut ParamStore, seed: u64, init: PlaneInit) -> Result<PlaneSet> {
    let config = PlaneSetConfig {
        spatial_res: 3,
        t_res: 2,
        s_res: 3,
        channels: 2,
        scales: vec![1, 2],
    };
    PlaneSet::register(store, "planes", config, init, &mut rng(seed))
}

fn check_multiscale(seed: u64) -> Result<GradReport> {
    let mut store = ParamStore::new();
    let set = small_planes(&mut store, seed, PlaneInit::Uniform { lo: -1.0, hi: 1.0 })?;
    let mut rng = rng(seed + 100);
    let c: Vec<f64> = [2.9, 2.9, 2.9, 1.9, 2.9].iter().map(|&hi| rng.random_range(0.1..hi)).collect();
    let coord = store.insert("coord", c)?;
    let w = weights(&mut rng, set.feature_len());
    grad_check(&mut store, STEP, |s| {
        let c = s.values(coord);
        let c = crate::featplanes::NormalizedCoord::new(c[0], c[1], c[2], c[3], c[4]);
        let (f, tape) = set.multiscale_feature_taped(s, &c)?;
        let gc = set.multiscale_feature_backward(s, &tape, &w);
        s.grads_mut(coord).copy_from_slice(&gc.as_array());
        Ok(dot(&f, &w))
    })
}

fn check_field_query(seed: u64) -> Result<GradReport> {
    let mut store = ParamStore::new();
    let mut rng = rng(seed);
    let bounds = SceneBounds::new([-1.0; 3], [1.0; 3], 3, 5)?;
    let cfg = FieldConfig {
        spatial_res: 4,
        channels: 3,
        scales: vec![1, 2],
        hidden: vec![8],
    };
    let field = DistortionField::register(
        &mut store,
        "field",
        cfg,
        bounds,
        PlaneInit::Uniform { lo: 0.2, hi: 1.0 },
        &mut rng,
    )?;
    for id in field.head_ids() {
        for v in store.values_mut(id) {
            *v = rng.random_range(-0.3..0.3);
        }
    }
    let g0 = random_gaussian(&mut rng);
    let center = store.insert("center", g0.center().to_vec())?;
    let (t, s) = (rng.random_range(0..3), rng.random_range(0..5));
    let w = weights(&mut rng, 16);
    let up = Distortion {
        d_mu: four(&w[0..4]),
        d_ql: four(&w[4..8]),
        d_qr: four(&w[8..12]),
        d_s: four(&w[12..16]),
    };
    grad_check(&mut store, STEP, |store| {
        let mut g = g0;
        g.mu[0..3].copy_from_slice(store.values(center));
        let (d, tape) = field.query_taped(store, &g, t, s)?;
        let gc = field.query_backward(store, &tape, &up);
        store.grads_mut(center).copy_from_slice(&gc);
        Ok(dot(&d.to_array(), &w))
    })
}

fn check_apply_distortion(seed: u64) -> Result<GradReport> {
    let mut rng = rng(seed);
    let g0 = random_gaussian(&mut rng);
    let mut x = pack_geometry(&g0);
    x.extend((0..16).map(|_| rng.random_range(-0.3..0.3)));
    let w = weights(&mut rng, 16);
    grad_check_fn(&x, STEP, |x| {
        let mut g = g0;
        g.mu = four(&x[0..4]);
        g.log_scales = four(&x[4..8]);
        g.q_l = four(&x[8..12]);
        g.q_r = four(&x[12..16]);
        let d = Distortion {
            d_mu: four(&x[16..20]),
            d_ql: four(&x[20..24]),
            d_qr: four(&x[24..28]),
            d_s: four(&x[28..32]),
        };
        let out = apply_distortion(&g, &d)?;
        let up = Gaussian4DGrad {
            mu: four(&w[0..4]),
            log_scales: four(&w[4..8]),
            q_l: four(&w[8..12]),
            q_r: four(&w[12..16]),
            ..Default::default()
        };
        let (gc, gd) = apply_distortion_backward(&g, &d, &up);
        let grad = [gc.mu, gc.log_scales, gc.q_l, gc.q_r, gd.d_mu, gd.d_ql, gd.d_qr, gd.d_s].concat();
        Ok((dot(&pack_geometry(&out), &w), grad))
    })
}

fn check_rotation(seed: u64) -> Result<GradReport> {
    let mut rng = rng(seed);
    let w = Matrix4::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let x = [unit_quat(&mut rng), unit_quat(&mut rng)].concat();
    grad_check_fn(&x, STEP, |x| {
        let (a, b) = (four(&x[0..4]), four(&x[4..8]));
        let (ga, gb) = rotation_from_pair_backward(a, b, &w);
        Ok((rotation_from_pair(a, b).component_mul(&w).sum(), [ga, gb].concat()))
    })
}

fn check_covariance(seed: u64) -> Result<GradReport> {
    let mut rng = rng(seed);
    let w = Matrix4::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let g0 = random_gaussian(&mut rng);
    let x = [g0.log_scales, g0.q_l, g0.q_r].concat();
    grad_check_fn(&x, STEP, |x| {
        let mut g = g0;
        g.log_scales = four(&x[0..4]);
        g.q_l = four(&x[4..8]);
        g.q_r = four(&x[8..12]);
        let gg = covariance4d_backward(&g, &w);
        Ok((covariance4d(&g).component_mul(&w).sum(), [gg.log_scales, gg.q_l, gg.q_r].concat()))
    })
}

fn check_slice(seed: u64) -> Result<GradReport> {
    let mut rng = rng(seed);
    let g0 = random_gaussian(&mut rng);
    let t0 = g0.mu[3] + rng.random_range(-1.0..1.0);
    let up = SlicedGrad {
        mean3: Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
        cov3: Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
        temporal_weight: rng.random_range(-1.0..1.0),
        opacity: rng.random_range(-1.0..1.0),
        color: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
    };
    let mut x = pack_geometry(&g0);
    x.push(g0.opacity_logit);
    x.extend(g0.color);
    x.push(t0);
    grad_check_fn(&x, STEP, |x| {
        let g = Gaussian4D {
            mu: four(&x[0..4]),
            log_scales: four(&x[4..8]),
            q_l: four(&x[8..12]),
            q_r: four(&x[12..16]),
            opacity_logit: x[16],
            color: [x[17], x[18], x[19]],
        };
        let t = x[20];
        let s = slice_at(&g, t)?;
        let f = s.mean3.dot(&up.mean3)
            + s.cov3.component_mul(&up.cov3).sum()
            + s.temporal_weight * up.temporal_weight
            + s.opacity * up.opacity
            + dot(&s.color, &up.color);
        let (gg, gt) = slice_backward(&g, t, &up)?;
        let mut grad = [gg.mu, gg.log_scales, gg.q_l, gg.q_r].concat();
        grad.push(gg.opacity_logit);
        grad.extend(gg.color);
        grad.push(gt);
        Ok((f, grad))
    })
}

fn check_project(seed: u64) -> Result<GradReport> {
    let mut rng = rng(seed);
    let k = Intrinsics::from_fov(32, 24, 1.0);
    let q = unit_quat(&mut rng);
    let mean = Vector3::<f64>::from_fn(|_, _| rng.random_range(-0.5..0.5));
    let t0 = Vector3::new(0.0, 0.0, rng.random_range(3.0..5.0)) - quat::to_matrix(q) * mean;
    let a = Matrix3::<f64>::from_fn(|_, _| rng.random_range(-0.3..0.3));
    let cov = a * a.transpose() + Matrix3::identity() * 0.01;
    let wm = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let wc = Matrix2::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let mut x: Vec<f64> = mean.iter().copied().collect();
    x.extend(cov.iter());
    x.extend(q);
    x.extend(t0.iter());
    grad_check_fn(&x, STEP, |x| {
        let mean = Vector3::new(x[0], x[1], x[2]);
        let cov = Matrix3::from_column_slice(&x[3..12]);
        let q = four(&x[12..16]);
        let r = quat::to_matrix(q);
        let t = Vector3::new(x[16], x[17], x[18]);
        let p = project_with(&k, &r, &t, &mean, &cov)
            .ok_or_else(|| crate::Error::Config("probe point left the frustum".into()))?;
        let f = wm[0] * p.mean2[0] + wm[1] * p.mean2[1] + p.cov2.component_mul(&wc).sum();
        let g = project_backward(&k, &r, &t, &mean, &cov, wm, &wc);
        let mut grad: Vec<f64> = g.mean3.iter().copied().collect();
        grad.extend(g.cov3.iter());
        grad.extend(quat::to_matrix_backward(q, &g.rot));
        grad.extend(g.t.iter());
        Ok((f, grad))
    })
}

fn check_render(seed: u64) -> Result<GradReport> {
    const SIZE: usize = 14;
    const N: usize = 5;
    let mut rng = rng(seed);
    let (q, t) = CameraView::look_at(
        [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), -3.0],
        [0.0; 3],
        [0.0, -1.0, 0.0],
    );
    let v0 = CameraView::new("probe", Intrinsics::from_fov(SIZE, SIZE, 0.8), q, t, ViewKind::Input, 0, None)?;
    let scene0: Vec<Sliced3D> = (0..N)
        .map(|i| {
            let a = Matrix3::<f64>::from_fn(|_, _| rng.random_range(-0.15..0.15));
            Sliced3D {
                mean3: Vector3::new(
                    rng.random_range(-0.4..0.4),
                    rng.random_range(-0.4..0.4),
                    rng.random_range(-0.4..0.4) + 0.05 * i as f64,
                ),
                cov3: a * a.transpose() + Matrix3::identity() * 0.01,
                temporal_weight: rng.random_range(0.3..1.0),
                opacity: rng.random_range(0.2..0.9),
                color: std::array::from_fn(|_| rng.random_range(0.0..1.0)),
            }
        })
        .collect();
    let attr0 = weights(&mut rng, N);
    let opts = RenderOptions::default();
    let base = render(&v0, &scene0, Some(&attr0), &opts)?;
    // targets well away from the render keep the L1 residuals off their kinks
    let target = Image::from_fn(SIZE, SIZE, 3, |x, y, c| {
        base.color.get(x, y, c) + if (x + 2 * y + c) % 2 == 0 { 0.25 } else { -0.25 }
    });
    let npx = (SIZE * SIZE) as f64;
    let attr_w = Image::from_fn(SIZE, SIZE, 1, |x, y, _| (((x + y) % 3) as f64 - 1.0) / npx);
    let alpha_w = Image::from_fn(SIZE, SIZE, 1, |x, y, _| ((x * y) % 4) as f64 * 0.1 / npx);
    const PER: usize = 18;
    let mut x = Vec::new();
    for (s, a) in scene0.iter().zip(&attr0) {
        x.extend(s.mean3.iter());
        x.extend(s.cov3.iter());
        x.extend([s.temporal_weight, s.opacity]);
        x.extend(s.color);
        x.push(*a);
    }
    x.extend(v0.q_cam);
    x.extend(v0.t_cam);
    grad_check_fn(&x, STEP, |x| {
        let (scene, attr): (Vec<Sliced3D>, Vec<f64>) = x[..N * PER]
            .chunks(PER)
            .map(|p| {
                let s = Sliced3D {
                    mean3: Vector3::new(p[0], p[1], p[2]),
                    cov3: Matrix3::from_column_slice(&p[3..12]),
                    temporal_weight: p[12],
                    opacity: p[13],
                    color: [p[14], p[15], p[16]],
                };
                (s, p[17])
            })
            .unzip();
        let mut v = v0.clone();
        let o = N * PER;
        v.q_cam = four(&x[o..o + 4]);
        v.t_cam = [x[o + 4], x[o + 5], x[o + 6]];
        let out = render(&v, &scene, Some(&attr), &opts)?;
        let loss = crate::optimloop::l1_loss(&out.color, &target)?;
        let at = out.attribute.as_ref().expect("attribute requested");
        let f = loss.value + dot(at.data(), attr_w.data()) + dot(out.alpha.data(), alpha_w.data());
        let up = RenderUpstream {
            color: &loss.grad,
            alpha: Some(&alpha_w),
            attribute: Some(&attr_w),
        };
        let g = render_backward(&v, &scene, Some(&attr), &opts, &up)?;
        let mut grad = Vec::with_capacity(x.len());
        for (s, a) in g.slices.iter().zip(&g.attr) {
            grad.extend(s.mean3.iter());
            grad.extend(s.cov3.iter());
            grad.extend([s.temporal_weight, s.opacity]);
            grad.extend(s.color);
            grad.push(*a);
        }
        grad.extend(g.pose.q);
        grad.extend(g.pose.t);
        Ok((f, grad))
    })
}

fn noise(seed: u64, size: usize) -> Image {
    let mut rng = rng(seed);
    Image::from_fn(size, size, 3, |_, _, _| rng.random_range(0.0..1.0))
}

// `b` is `a` minus a ramp, so residuals stay clear of the L1 kinks at zero.
fn image_check(seed: u64, size: usize, loss: impl Fn(&Image, &Image) -> Result<crate::optimloop::ImageLoss>) -> Result<GradReport> {
    let a = noise(seed, size);
    let b = Image::from_fn(size, size, 3, |x, y, c| {
        a.get(x, y, c) - 0.2 - 0.02 * x as f64 - 0.03 * y as f64 - 0.01 * c as f64
    });
    grad_check_fn(a.data(), STEP, |x| {
        let l = loss(&Image::from_vec(size, size, 3, x.to_vec())?, &b)?;
        Ok((l.value, l.grad.into_vec()))
    })
}

fn check_input_loss(seed: u64) -> Result<GradReport> {
    let w = LossWeights::default();
    image_check(seed, 12, |a, b| input_view_loss(a, b, &w))
}

fn check_dssim(seed: u64) -> Result<GradReport> {
    let b = noise(seed + 1000, 13);
    let a = noise(seed, 13);
    grad_check_fn(a.data(), STEP, |x| {
        let l = dssim_loss(&Image::from_vec(13, 13, 3, x.to_vec())?, &b)?;
        Ok((l.value, l.grad.into_vec()))
    })
}

fn check_gen_loss(seed: u64) -> Result<GradReport> {
    let w = LossWeights::default();
    image_check(seed, 9, |a, b| gen_view_loss(a, b, &w, &GradientL1))
}

fn check_pose_loss(seed: u64) -> Result<GradReport> {
    let mut rng = rng(seed);
    let mut v0 = CameraView::new(
        "g0",
        Intrinsics::from_fov(8, 8, 1.0),
        unit_quat(&mut rng),
        std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
        ViewKind::Generated,
        0,
        Some(0),
    )?;
    let mut x = unit_quat(&mut rng).to_vec();
    x.extend((0..3).map(|_| rng.random_range(-1.0..1.0)));
    grad_check_fn(&x, STEP, |x| {
        v0.q_cam = four(&x[0..4]);
        v0.t_cam = [x[4], x[5], x[6]];
        let p = pose_loss_single(&v0, 0.1);
        Ok((p.value, [p.grad_q.as_slice(), p.grad_t.as_slice()].concat()))
    })
}

fn check_tv(seed: u64) -> Result<GradReport> {
    let mut store = ParamStore::new();
    let set = small_planes(&mut store, seed, PlaneInit::Uniform { lo: -1.0, hi: 1.0 })?;
    grad_check(&mut store, STEP, |s| Ok(0.7 * set.tv_loss(s, 0.7)))
}

fn check_smooth(seed: u64) -> Result<GradReport> {
    let mut store = ParamStore::new();
    let set = small_planes(&mut store, seed, PlaneInit::Uniform { lo: -1.0, hi: 1.0 })?;
    grad_check(&mut store, STEP, |s| Ok(set.smooth_loss(s, 0.7)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_operation_passes_on_two_seeds() {
        let rows = gradient_suite(2).unwrap();
        assert_eq!(rows.len(), OPERATIONS.len());
        for r in &rows {
            assert!(r.passes(), "{r:?}");
        }
        assert!(suite_table(&rows).lines().all(|l| !l.contains("FAIL")));
    }
}
