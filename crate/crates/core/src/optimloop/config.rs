//! Training constants, loaded from and saved to JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffcore::{AdamConfig, LrSchedule};
use crate::error::{Error, Result};
use crate::featplanes::PlaneInit;
use crate::gauss4d::DensifyOptions;
use crate::splat::RenderOptions;
use crate::stdf::FieldConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// D-SSIM share of the input-view loss.
    pub lambda_dssim: f64,
    /// L1 weight on generated views.
    pub lambda1: f64,
    /// Perceptual weight on generated views.
    pub lambda2: f64,
    pub lambda_p: f64,
    /// Pose-axis smoothness of the field planes.
    pub lambda_s: f64,
    pub tv_weight: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_dssim: 0.2,
            lambda1: 0.02,
            lambda2: 0.2,
            lambda_p: 0.1,
            lambda_s: 1e-4,
            tv_weight: 1e-4,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("lambda_dssim", self.lambda_dssim),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda_p", self.lambda_p),
            ("lambda_s", self.lambda_s),
            ("tv_weight", self.tv_weight),
        ];
        for (name, v) in all {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be a non-negative number")));
            }
        }
        if self.lambda_dssim > 1.0 {
            return Err(Error::Config("lambda_dssim must not exceed 1".into()));
        }
        Ok(())
    }
}

/// Iteration milestones. Densification runs every `densify_interval`
/// iterations in `[densify_interval, densify_end]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub total_iters: usize,
    pub warmup_iters: usize,
    pub pose_opt_end: usize,
    pub densify_interval: usize,
    pub densify_end: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            total_iters: 30_000,
            warmup_iters: 1000,
            pose_opt_end: 7000,
            densify_interval: 500,
            densify_end: 15_000,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.warmup_iters < self.pose_opt_end && self.pose_opt_end <= self.total_iters) {
            return Err(Error::InvalidSchedule(format!(
                "need warmup ({}) < pose_opt_end ({}) <= total ({})",
                self.warmup_iters, self.pose_opt_end, self.total_iters
            )));
        }
        if self.densify_interval == 0 {
            return Err(Error::InvalidSchedule("densify_interval must be positive".into()));
        }
        Ok(())
    }

    /// Every milestone multiplied by `total / self.total_iters`, rounded to
    /// the nearest iteration (at least 1).
    pub fn scaled_to(&self, total: usize) -> Self {
        let f = total as f64 / self.total_iters as f64;
        let s = |v: usize| ((v as f64 * f).round() as usize).max(1);
        Self {
            total_iters: total,
            warmup_iters: s(self.warmup_iters),
            pose_opt_end: s(self.pose_opt_end),
            densify_interval: s(self.densify_interval),
            densify_end: s(self.densify_end),
        }
    }

    pub fn in_warmup(&self, iter: usize) -> bool {
        iter < self.warmup_iters
    }

    pub fn pose_active(&self, iter: usize) -> bool {
        iter >= self.warmup_iters && iter < self.pose_opt_end
    }

    pub fn densify_due(&self, iter: usize) -> bool {
        let done = iter + 1;
        done % self.densify_interval == 0 && done <= self.densify_end
    }
}

/// Learning rates per parameter group. Position and camera translation
/// rates are multiplied by the scene extent at training time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningRates {
    pub position: LrSchedule,
    pub log_scales: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub color: f64,
    pub planes: LrSchedule,
    pub mlp: LrSchedule,
    pub camera_rotation: f64,
    pub camera_translation: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position: LrSchedule {
                initial: 1.6e-4,
                final_lr: 1.6e-6,
                total_steps: 30_000,
            },
            log_scales: 5e-3,
            rotation: 1e-3,
            opacity: 5e-2,
            color: 2.5e-3,
            planes: LrSchedule {
                initial: 1.6e-3,
                final_lr: 1.6e-4,
                total_steps: 30_000,
            },
            mlp: LrSchedule {
                initial: 1.6e-4,
                final_lr: 1.6e-5,
                total_steps: 30_000,
            },
            camera_rotation: 1e-4,
            camera_translation: 1e-4,
        }
    }
}

impl LearningRates {
    pub fn validate(&self) -> Result<()> {
        for s in [&self.position, &self.planes, &self.mlp] {
            s.validate()?;
        }
        let flat = [
            self.log_scales,
            self.rotation,
            self.opacity,
            self.color,
            self.camera_rotation,
            self.camera_translation,
        ];
        if flat.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        Ok(())
    }
}

/// Which parts of the full model are enabled; the ablation switches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub use_field: bool,
    pub use_smooth: bool,
    pub use_pose_opt: bool,
}

impl Default for Variant {
    fn default() -> Self {
        Self {
            use_field: true,
            use_smooth: true,
            use_pose_opt: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub schedule: TrainSchedule,
    pub lrs: LearningRates,
    pub adam: AdamConfig,
    pub render: RenderOptions,
    pub densify: DensifyOptions,
    pub variant: Variant,
    pub field: FieldConfig,
    pub plane_init: PlaneInit,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            schedule: TrainSchedule::default(),
            lrs: LearningRates::default(),
            adam: AdamConfig::default(),
            render: RenderOptions {
                cutoff_sigma: Some(3.0),
            },
            densify: DensifyOptions::default(),
            variant: Variant::default(),
            field: FieldConfig::default(),
            plane_init: PlaneInit::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.schedule.validate()?;
        self.lrs.validate()
    }

    /// Shrink or stretch the run to `total` iterations: milestones and the
    /// decaying learning-rate horizons scale by the same factor.
    pub fn scaled_to(&self, total: usize) -> Self {
        let mut out = self.clone();
        out.schedule = self.schedule.scaled_to(total);
        let f = total as f64 / self.schedule.total_iters as f64;
        for s in [&mut out.lrs.position, &mut out.lrs.planes, &mut out.lrs.mlp] {
            *s = s.rescaled(((s.total_steps as f64 * f).round() as usize).max(1));
        }
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::splat::write_text(path, &self.to_json()?)
    }

    /// Round-trip the defaults through JSON and compare the published loss
    /// weights and schedule milestones.
    pub fn self_test() -> Result<()> {
        let cfg = Self::from_json(&Self::default().to_json()?)?;
        let expect = [
            ("lambda", cfg.weights.lambda_dssim, 0.2),
            ("lambda1", cfg.weights.lambda1, 0.02),
            ("lambda2", cfg.weights.lambda2, 0.2),
            ("lambda_p", cfg.weights.lambda_p, 0.1),
            ("lambda_s", cfg.weights.lambda_s, 1e-4),
            ("total_iters", cfg.schedule.total_iters as f64, 30_000.0),
            ("pose_opt_end", cfg.schedule.pose_opt_end as f64, 7000.0),
            ("warmup_iters", cfg.schedule.warmup_iters as f64, 1000.0),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::Config(format!("default {name} is {got}, expected {want}")));
            }
        }
        Ok(())
    }
}
