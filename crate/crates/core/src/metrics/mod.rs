//! Rotated IoU, average precision, attention-ratio tables and per-object
//! feature export.

mod ap;
mod export;
mod iou;
mod ratio;

pub use ap::{
    ap_from_matches, ap_report, average_precision, write_ap_csv, ApRow, ApValue, FrameResult, IouMode,
    AP_HEADER,
};
pub use export::{bilinear, export_object_features, write_feature_export, FeatureTag, ObjectFeature};
pub use iou::{bev_intersection, clip_polygon, iou_3d, polygon_area, rotated_iou_bev};
pub use ratio::{attention_ratio_report, AttnRatioRow, AttnRatioTable, SamRecord};
