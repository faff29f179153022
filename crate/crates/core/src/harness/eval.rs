//! Metric reports and distortion heatmaps for trained models.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss4d::{quat, slice_at};
use crate::optimloop::{align_test_pose, frame_time, psnr, ssim, AlignOptions, Model, TrainView};
use crate::splat::{render, write_text, CameraView, Image, RenderOptions, ViewKind};
use crate::stdf::distortion_magnitude;

use super::synth::Dataset;

/// Serialized PSNR; `+inf` (identical images) becomes the string `"inf"`.
mod psnr_value {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad PSNR `{t}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub view: String,
    #[serde(with = "psnr_value")]
    pub psnr: f64,
    pub ssim: f64,
    /// L1 before and after test-pose alignment, when it ran.
    pub align_l1: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: ViewKind,
    pub rows: Vec<EvalRow>,
    #[serde(with = "psnr_value")]
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

impl EvalReport {
    pub fn table(&self) -> String {
        let mut out = format!("{:<20}  {:>9}  {:>7}\n", "view", "psnr", "ssim");
        for r in &self.rows {
            writeln!(out, "{:<20}  {:>9.3}  {:>7.4}", r.view, r.psnr, r.ssim).expect("writing to a String");
        }
        writeln!(out, "{:<20}  {:>9.3}  {:>7.4}", "mean", self.mean_psnr, self.mean_ssim).expect("writing to a String");
        out
    }

    pub fn write(&self, json_path: &Path, table_path: &Path) -> Result<()> {
        write_text(json_path, &serde_json::to_string_pretty(self)?)?;
        write_text(table_path, &self.table())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub render: RenderOptions,
    /// Applied to evaluation views only.
    pub align: Option<AlignOptions>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            render: RenderOptions {
                cutoff_sigma: Some(3.0),
            },
            align: Some(AlignOptions::default()),
        }
    }
}

/// Render each view from the canonical Gaussians and score it against its
/// target. Generated views use the model's refined extrinsics; evaluation
/// views are first aligned to their targets.
pub fn evaluate_views(model: &Model, views: &[&TrainView], split: ViewKind, opts: &EvalOptions) -> Result<EvalReport> {
    let gaussians = model.canonical();
    let extent = model.bounds.extent();
    let rows = views
        .par_iter()
        .map(|tv| {
            let mut view = model.posed_view(&tv.view);
            let mut align_l1 = None;
            if let (ViewKind::Eval, Some(a)) = (view.kind, opts.align) {
                let a = AlignOptions { extent, ..a };
                let out = align_test_pose(&gaussians, &view, &tv.target, &a)?;
                view.q_cam = out.q_cam;
                view.t_cam = out.t_cam;
                align_l1 = Some((out.initial_loss, out.final_loss));
            }
            let slices = gaussians
                .iter()
                .map(|g| slice_at(g, frame_time(view.t_index)))
                .collect::<Result<Vec<_>>>()?;
            let img = render(&view, &slices, None, &opts.render)?.color;
            Ok(EvalRow {
                view: view.id.clone(),
                psnr: psnr(&img, &tv.target, 1.0)?,
                ssim: ssim(&img, &tv.target)?,
                align_l1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(report(split, rows))
}

pub fn evaluate(model: &Model, ds: &Dataset, split: ViewKind, opts: &EvalOptions) -> Result<EvalReport> {
    evaluate_views(model, &ds.split(split), split, opts)
}

/// Score images directly, e.g. ground truth against itself.
pub fn score_images(split: ViewKind, pairs: &[(&str, &Image, &Image)]) -> Result<EvalReport> {
    let rows = pairs
        .iter()
        .map(|(id, a, b)| {
            Ok(EvalRow {
                view: id.to_string(),
                psnr: psnr(a, b, 1.0)?,
                ssim: ssim(a, b)?,
                align_l1: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(report(split, rows))
}

fn report(split: ViewKind, rows: Vec<EvalRow>) -> EvalReport {
    let n = rows.len().max(1) as f64;
    EvalReport {
        split,
        mean_psnr: rows.iter().map(|r| r.psnr).sum::<f64>() / n,
        mean_ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / n,
        rows,
    }
}

/// Per-primitive distortion magnitude at `(t, s)`, normalized by its
/// maximum over the frame and splatted as an attribute from `view`.
pub fn heatmap(model: &Model, view: &CameraView, t_index: usize, s_index: usize) -> Result<Image> {
    let field = model.field.as_ref().ok_or(Error::FieldAbsent)?;
    let gaussians = model.canonical();
    let mag = distortion_magnitude(field, &model.store, &gaussians, t_index, s_index)?;
    let peak = mag.iter().copied().fold(0.0, f64::max);
    let attr: Vec<f64> = mag.iter().map(|m| if peak > 0.0 { m / peak } else { 0.0 }).collect();
    let mut at = view.clone();
    at.t_index = t_index;
    let slices = gaussians
        .iter()
        .map(|g| slice_at(g, frame_time(t_index)))
        .collect::<Result<Vec<_>>>()?;
    let out = render(&at, &slices, Some(&attr), &RenderOptions::default())?;
    Ok(out.attribute.expect("attribute requested"))
}

/// `view` with its extrinsics rotated by exactly `deg` degrees about a random
/// axis and its center moved by exactly `frac * extent`.
pub fn perturb_view<R: Rng>(view: &CameraView, deg: f64, frac: f64, extent: f64, rng: &mut R) -> CameraView {
    let mut unit = || loop {
        let v = Vector3::<f64>::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    };
    let axis = unit();
    let dir = unit() * frac * extent;
    let mut out = view.clone();
    out.q_cam = quat::normalized(quat::mul(quat::from_axis_angle([axis[0], axis[1], axis[2]], deg.to_radians()), view.q_cam));
    for a in 0..3 {
        out.t_cam[a] += dir[a];
    }
    out
}
