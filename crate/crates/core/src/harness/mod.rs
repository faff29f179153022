//! Synthetic datasets with injected distortions, file formats, evaluation
//! reports and the end-to-end ablation experiments.

mod dataset;
mod eval;
mod experiments;
mod gradsuite;
mod synth;
mod visibility;

pub use dataset::{image_path, sha256_hex, Manifest, MANIFEST, SCENE};
pub use eval::{evaluate, evaluate_views, heatmap, perturb_view, score_images, EvalOptions, EvalReport, EvalRow};
pub use gradsuite::{gradient_suite, suite_table, SuiteRow, OPERATIONS, STEP, TOLERANCE};
pub use experiments::{median, run_ablation, run_variant, Ablation, AblationRow, AblationSummary, RunResult};
pub use synth::{
    flow_proxy, mean_pixel_displacement, render_warped, rig, synth, view_id, Dataset, DistortionSpec, PoseJitter, RigSpec, Ring,
    SynthSpec,
    Warp, WarpRegion, TRUTH_RENDER,
};
pub use visibility::{synthetic_visibility, VisibilitySpec};
