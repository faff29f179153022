use nalgebra::{Matrix2, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::camera::{pose_matrices, pose_matrices_backward, CameraView, PoseGrad};
use super::image::Image;
use super::project::{conic, max_eigen, project_backward, project_with, Projected};
use crate::error::{Error, Result};
use crate::gauss4d::{Sliced3D, SlicedGrad};

/// Upper bound on any single primitive's per-pixel opacity.
pub const ALPHA_MAX: f64 = 0.999;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    /// Skip pixels farther than this many standard deviations (along the
    /// footprint's major axis) from a primitive's center. `None` is exact.
    pub cutoff_sigma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderTarget {
    pub color: Image,
    pub alpha: Image,
    pub attribute: Option<Image>,
}

/// Upstream gradients of a render.
#[derive(Clone, Copy, Debug)]
pub struct RenderUpstream<'a> {
    pub color: &'a Image,
    pub alpha: Option<&'a Image>,
    pub attribute: Option<&'a Image>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderGrads {
    /// One entry per input slice (zero for culled primitives).
    pub slices: Vec<SlicedGrad>,
    pub attr: Vec<f64>,
    pub pose: PoseGrad,
}

#[derive(Clone, Copy, Debug)]
struct Splat {
    index: usize,
    proj: Projected,
    conic: [f64; 3],
    opacity: f64,
    weight: f64,
    color: [f64; 3],
    attr: f64,
    // inclusive pixel bounds
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

impl Splat {
    // (alpha before clamping, gaussian falloff, dx, dy)
    fn eval(&self, px: f64, py: f64) -> (f64, f64, f64, f64) {
        let dx = px - self.proj.mean2[0];
        let dy = py - self.proj.mean2[1];
        let [a, b, c] = self.conic;
        let g = (-0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy)).exp();
        (self.opacity * self.weight * g, g, dx, dy)
    }
}

struct Prepared {
    splats: Vec<Splat>,
    rot: Matrix3<f64>,
    t: Vector3<f64>,
}

fn prepare(view: &CameraView, slices: &[Sliced3D], attr: Option<&[f64]>, opts: &RenderOptions) -> Result<Prepared> {
    if let Some(a) = attr {
        if a.len() != slices.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} attribute values for {} primitives",
                a.len(),
                slices.len()
            )));
        }
    }
    let (rot, t) = pose_matrices(view);
    let (w, h) = (view.width(), view.height());
    let mut splats = Vec::with_capacity(slices.len());
    for (index, sl) in slices.iter().enumerate() {
        let Some(proj) = project_with(&view.intrinsics, &rot, &t, &sl.mean3, &sl.cov3) else {
            continue;
        };
        let Some(conic) = conic(&proj.cov2) else {
            log::warn!("primitive {index}: screen covariance not invertible, skipped");
            continue;
        };
        let (mut x0, mut x1, mut y0, mut y1) = (0, w.saturating_sub(1), 0, h.saturating_sub(1));
        if let Some(k) = opts.cutoff_sigma {
            let r = k * max_eigen(&proj.cov2).sqrt();
            let [u, v] = proj.mean2;
            let lo_x = (u - r).ceil();
            let hi_x = (u + r).floor();
            let lo_y = (v - r).ceil();
            let hi_y = (v + r).floor();
            if hi_x < 0.0 || hi_y < 0.0 || lo_x > x1 as f64 || lo_y > y1 as f64 || !(lo_x <= hi_x && lo_y <= hi_y) {
                continue;
            }
            x0 = lo_x.max(0.0) as usize;
            y0 = lo_y.max(0.0) as usize;
            x1 = x1.min(hi_x as usize);
            y1 = y1.min(hi_y as usize);
        }
        splats.push(Splat {
            index,
            proj,
            conic,
            opacity: sl.opacity,
            weight: sl.temporal_weight,
            color: sl.color,
            attr: attr.map_or(0.0, |a| a[index]),
            x0,
            x1,
            y0,
            y1,
        });
    }
    splats.sort_by(|a, b| a.proj.depth.total_cmp(&b.proj.depth).then(a.index.cmp(&b.index)));
    Ok(Prepared { splats, rot, t })
}

/// Front-to-back alpha blending of depth-sorted footprints over a black
/// background, evaluated exactly at every pixel.
pub fn render(
    view: &CameraView,
    slices: &[Sliced3D],
    attr: Option<&[f64]>,
    opts: &RenderOptions,
) -> Result<RenderTarget> {
    let prep = prepare(view, slices, attr, opts)?;
    let (w, h) = (view.width(), view.height());
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let active: Vec<&Splat> = prep.splats.iter().filter(|s| s.y0 <= y && y <= s.y1).collect();
            let mut color = vec![0.0; 3 * w];
            let mut alpha = vec![0.0; w];
            let mut at = vec![0.0; w];
            for x in 0..w {
                let mut trans = 1.0;
                let mut c = [0.0; 3];
                let mut a_sum = 0.0;
                for s in active.iter().filter(|s| s.x0 <= x && x <= s.x1) {
                    let (raw, ..) = s.eval(x as f64, y as f64);
                    let a = raw.min(ALPHA_MAX);
                    let wgt = a * trans;
                    for ch in 0..3 {
                        c[ch] += s.color[ch] * wgt;
                    }
                    a_sum += s.attr * wgt;
                    trans *= 1.0 - a;
                }
                color[3 * x..3 * x + 3].copy_from_slice(&c);
                alpha[x] = 1.0 - trans;
                at[x] = a_sum;
            }
            (color, alpha, at)
        })
        .collect();
    let mut color = Vec::with_capacity(3 * w * h);
    let mut alpha = Vec::with_capacity(w * h);
    let mut at = Vec::with_capacity(w * h);
    for (c, a, t) in rows {
        color.extend(c);
        alpha.extend(a);
        at.extend(t);
    }
    Ok(RenderTarget {
        color: Image::from_vec(w, h, 3, color)?,
        alpha: Image::from_vec(w, h, 1, alpha)?,
        attribute: match attr {
            Some(_) => Some(Image::from_vec(w, h, 1, at)?),
            None => None,
        },
    })
}

// Per-splat screen-space gradient, in sorted order.
#[derive(Clone, Copy, Debug, Default)]
struct ScreenGrad {
    mean2: [f64; 2],
    conic: [f64; 3],
    opacity: f64,
    weight: f64,
    color: [f64; 3],
    attr: f64,
}

impl ScreenGrad {
    fn add(&mut self, o: &ScreenGrad) {
        for i in 0..2 {
            self.mean2[i] += o.mean2[i];
        }
        for i in 0..3 {
            self.conic[i] += o.conic[i];
            self.color[i] += o.color[i];
        }
        self.opacity += o.opacity;
        self.weight += o.weight;
        self.attr += o.attr;
    }
}

/// Adjoint of [`render`]. Per-row partial sums are reduced in row order, so
/// the result does not depend on the number of worker threads.
pub fn render_backward(
    view: &CameraView,
    slices: &[Sliced3D],
    attr: Option<&[f64]>,
    opts: &RenderOptions,
    up: &RenderUpstream,
) -> Result<RenderGrads> {
    let (w, h) = (view.width(), view.height());
    if (up.color.width(), up.color.height(), up.color.channels()) != (w, h, 3) {
        return Err(Error::ShapeMismatch("color gradient does not match the view".into()));
    }
    for img in [up.alpha, up.attribute].into_iter().flatten() {
        if (img.width(), img.height(), img.channels()) != (w, h, 1) {
            return Err(Error::ShapeMismatch("alpha/attribute gradient does not match the view".into()));
        }
    }
    let prep = prepare(view, slices, attr, opts)?;
    let n = prep.splats.len();

    let partials: Vec<Vec<(usize, ScreenGrad)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let active: Vec<(usize, &Splat)> = prep
                .splats
                .iter()
                .enumerate()
                .filter(|(_, s)| s.y0 <= y && y <= s.y1)
                .collect();
            let mut acc = vec![ScreenGrad::default(); active.len()];
            let mut hits: Vec<(usize, f64, f64, f64, f64, f64, f64)> = Vec::new();
            for x in 0..w {
                let gc = [up.color.get(x, y, 0), up.color.get(x, y, 1), up.color.get(x, y, 2)];
                let ga = up.alpha.map_or(0.0, |i| i.get(x, y, 0));
                let gt = up.attribute.map_or(0.0, |i| i.get(x, y, 0));
                if gc == [0.0; 3] && ga == 0.0 && gt == 0.0 {
                    continue;
                }
                // forward replay: (slot, alpha, raw, falloff, dx, dy, transmittance before)
                hits.clear();
                let mut trans = 1.0;
                for (slot, (_, s)) in active.iter().enumerate() {
                    if !(s.x0 <= x && x <= s.x1) {
                        continue;
                    }
                    let (raw, falloff, dx, dy) = s.eval(x as f64, y as f64);
                    let a = raw.min(ALPHA_MAX);
                    hits.push((slot, a, raw, falloff, dx, dy, trans));
                    trans *= 1.0 - a;
                }
                let t_final = trans;
                let mut behind_c = [0.0; 3];
                let mut behind_t = 0.0;
                for &(slot, a, raw, falloff, dx, dy, t_i) in hits.iter().rev() {
                    let s = active[slot].1;
                    let g = &mut acc[slot];
                    let wgt = a * t_i;
                    let inv = 1.0 / (1.0 - a);
                    let mut g_alpha = ga * t_final * inv;
                    for ch in 0..3 {
                        g.color[ch] += gc[ch] * wgt;
                        g_alpha += gc[ch] * (s.color[ch] * t_i - behind_c[ch] * inv);
                    }
                    g.attr += gt * wgt;
                    g_alpha += gt * (s.attr * t_i - behind_t * inv);
                    for ch in 0..3 {
                        behind_c[ch] += s.color[ch] * wgt;
                    }
                    behind_t += s.attr * wgt;
                    if raw > ALPHA_MAX || g_alpha == 0.0 {
                        continue;
                    }
                    g.opacity += g_alpha * s.weight * falloff;
                    g.weight += g_alpha * s.opacity * falloff;
                    let g_pow = g_alpha * raw;
                    let [ca, cb, cc] = s.conic;
                    g.mean2[0] += g_pow * (ca * dx + cb * dy);
                    g.mean2[1] += g_pow * (cb * dx + cc * dy);
                    g.conic[0] += g_pow * (-0.5 * dx * dx);
                    g.conic[1] += g_pow * (-dx * dy);
                    g.conic[2] += g_pow * (-0.5 * dy * dy);
                }
            }
            active.iter().map(|(k, _)| *k).zip(acc).collect()
        })
        .collect();

    let mut screen = vec![ScreenGrad::default(); n];
    for row in &partials {
        for (k, g) in row {
            screen[*k].add(g);
        }
    }

    let mut out = RenderGrads {
        slices: vec![SlicedGrad::default(); slices.len()],
        attr: vec![0.0; slices.len()],
        pose: PoseGrad::default(),
    };
    let mut g_rot = Matrix3::zeros();
    let mut g_t = Vector3::zeros();
    for (s, g) in prep.splats.iter().zip(&screen) {
        let [a, b, c] = s.conic;
        let q = Matrix2::new(a, b, b, c);
        let gq = Matrix2::new(g.conic[0], 0.5 * g.conic[1], 0.5 * g.conic[1], g.conic[2]);
        let g_cov2 = -(q * gq * q);
        let sl = &slices[s.index];
        let pg = project_backward(&view.intrinsics, &prep.rot, &prep.t, &sl.mean3, &sl.cov3, g.mean2, &g_cov2);
        out.slices[s.index] = SlicedGrad {
            mean3: pg.mean3,
            cov3: pg.cov3,
            temporal_weight: g.weight,
            opacity: g.opacity,
            color: g.color,
        };
        out.attr[s.index] = g.attr;
        g_rot += pg.rot;
        g_t += pg.t;
    }
    out.pose = pose_matrices_backward(view, &g_rot, &g_t);
    Ok(out)
}
