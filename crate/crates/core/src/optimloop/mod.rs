//! Losses, metrics, the training schedule and test-view pose alignment.

mod align;
mod config;
mod losses;
mod model;
mod train;

pub use align::{align_test_pose, AlignOptions, AlignOutcome};
pub use config::{LearningRates, LossWeights, TrainConfig, TrainSchedule, Variant};
pub use losses::{
    dssim_loss, gen_view_loss, input_view_loss, l1_loss, pose_loss, pose_loss_single, psnr, ssim, GradientL1,
    ImageDistance, ImageLoss, PoseLoss, ZeroDistance, SSIM_WINDOW,
};
pub use model::{GaussianParams, Model, PoseParams, FIELD_PREFIX};
pub use train::{frame_time, objective, train, LossBreakdown, TrainOutcome, TrainView, Trainer, LOG_HEADER};
