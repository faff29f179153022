//! End-to-end ablations on synthetic datasets.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::optimloop::{train, GradientL1, Model, TrainConfig, Variant};
use crate::splat::ViewKind;

use super::eval::{evaluate, EvalOptions, EvalReport};
use super::synth::{synth, Dataset, SynthSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    NoField,
    NoSmooth,
    NoPoseOpt,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::NoField, Ablation::NoSmooth, Ablation::NoPoseOpt];

    pub fn variant(self) -> Variant {
        let full = Variant::default();
        match self {
            Ablation::Full => full,
            Ablation::NoField => Variant {
                use_field: false,
                ..full
            },
            Ablation::NoSmooth => Variant {
                use_smooth: false,
                ..full
            },
            Ablation::NoPoseOpt => Variant {
                use_pose_opt: false,
                ..full
            },
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoField => "w/o field",
            Ablation::NoSmooth => "w/o smooth",
            Ablation::NoPoseOpt => "w/o pose opt",
        }
    }
}

pub struct RunResult {
    pub ablation: Ablation,
    pub model: Model,
    pub log: String,
    pub report: EvalReport,
}

/// Train one variant on `ds` and score it on the held-out views.
pub fn run_variant(ds: &Dataset, base: &TrainConfig, ablation: Ablation, eval: &EvalOptions) -> Result<RunResult> {
    let cfg = TrainConfig {
        variant: ablation.variant(),
        ..base.clone()
    };
    let views = ds.training_views();
    let out = train(&ds.init, ds.bounds, &views, &cfg, &GradientL1)?;
    let report = evaluate(&out.model, ds, ViewKind::Eval, eval)?;
    Ok(RunResult {
        ablation,
        model: out.model,
        log: out.log,
        report,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub ablation: Ablation,
    pub seed: u64,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub rows: Vec<AblationRow>,
}

pub fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => xs[n / 2],
        _ => 0.5 * (xs[n / 2 - 1] + xs[n / 2]),
    }
}

impl AblationSummary {
    fn metric(&self, a: Ablation, f: impl Fn(&AblationRow) -> f64) -> Vec<f64> {
        self.rows.iter().filter(|r| r.ablation == a).map(f).collect()
    }

    pub fn median_psnr(&self, a: Ablation) -> f64 {
        median(&mut self.metric(a, |r| r.mean_psnr))
    }

    pub fn median_ssim(&self, a: Ablation) -> f64 {
        median(&mut self.metric(a, |r| r.mean_ssim))
    }

    /// Per-seed differences `a - b`, medianed.
    pub fn median_gap(&self, a: Ablation, b: Ablation, f: impl Fn(&AblationRow) -> f64 + Copy) -> f64 {
        let mut gaps: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.ablation == a)
            .filter_map(|ra| {
                self.rows
                    .iter()
                    .find(|rb| rb.ablation == b && rb.seed == ra.seed)
                    .map(|rb| f(ra) - f(rb))
            })
            .collect();
        median(&mut gaps)
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<14}  {:>4}  {:>9}  {:>7}\n", "variant", "seed", "psnr", "ssim");
        for r in &self.rows {
            writeln!(out, "{:<14}  {:>4}  {:>9.3}  {:>7.4}", r.ablation.label(), r.seed, r.mean_psnr, r.mean_ssim)
                .expect("writing to a String");
        }
        out
    }
}

/// Synthesize one dataset per seed and train every requested variant on it.
pub fn run_ablation(spec: &SynthSpec, seeds: &[u64], ablations: &[Ablation], eval: &EvalOptions) -> Result<AblationSummary> {
    let mut summary = AblationSummary::default();
    for &seed in seeds {
        let spec = SynthSpec { seed, ..spec.clone() };
        let ds = synth(&spec)?;
        let cfg = spec.train_config();
        for &a in ablations {
            let r = run_variant(&ds, &cfg, a, eval)?;
            log::info!("seed {seed} {}: {:.3} dB, ssim {:.4}", a.label(), r.report.mean_psnr, r.report.mean_ssim);
            summary.rows.push(AblationRow {
                ablation: a,
                seed,
                mean_psnr: r.report.mean_psnr,
                mean_ssim: r.report.mean_ssim,
            });
        }
    }
    Ok(summary)
}
