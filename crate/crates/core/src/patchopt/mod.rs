//! Adversarial-patch losses, transforms and update rules.

mod geometry;
mod losses;
mod masks;
mod optim;
mod optimize;
mod texture;
mod toy;

pub use geometry::{
    apply_patch, apply_patch_backward, composite, gaussian_kernel, gaussian_smooth,
    perspective_warp, resize_bilinear, resize_bilinear_backward, resize_scale, zoom_factor,
    Homography, PinholeModel, PixelBox,
};
pub use losses::{
    combine_loss, ensemble_adv_loss, nps_loss, obj_loss, targeted_cls_loss, tv_loss, Anchor,
    AnchorLoss, AnchorSet, LossGrad, TvMode, PROB_FLOOR, TV_EPS,
};
pub use masks::{random_block_mask, BlockMaskSpec, BlockShape};
pub use optim::{adam_step, momentum_step, AdamParams, PatchState, GRAD_L1_FLOOR};
pub use optimize::{
    optimize_patch, Frame, FrameContext, LossProvider, LossWeights, OptimizeOutcome,
    OptimizeSettings, OptimizerKind, DEFAULT_NOISE,
};
pub use texture::{load_palette, parse_palette, Palette, Texture};
pub use toy::{ToyDetector, ToyScene, ToySceneSpec};
