//! Anchor-based detection head on the fused map, focal and smooth-L1
//! losses, NMS and the sensor-combination loss.

mod anchors;
mod boxes;
mod head;
mod loss;
mod nms;

pub use anchors::{AnchorGrid, BevGrid, ClassPrior, ANCHOR_YAWS};
pub use boxes::{decode_box, encode_box, Box3d, BOX_CODE_SIZE};
pub use head::{head_forward, im2col_index, HeadConfig, HeadOutput, HeadParams};
pub use loss::{
    detection_loss, focal_loss, match_anchors, scl_loss, smooth_l1, AnchorLabel, ComboLoss,
    DetectionTargets, GtBox, Model, SclOutput,
};
pub use nms::{decode_detections, detection_order, nms, Detection};
