use std::fmt;
use std::io::Write;

use super::iou::{iou_3d, rotated_iou_bev};
use crate::headloss::{Box3d, Detection, GtBox};

/// Which overlap measure decides a match.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IouMode {
    Bev,
    ThreeD,
}

impl IouMode {
    pub fn iou(self, a: &Box3d, b: &Box3d) -> f64 {
        match self {
            IouMode::Bev => rotated_iou_bev(a, b),
            IouMode::ThreeD => iou_3d(a, b),
        }
    }
}

impl fmt::Display for IouMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IouMode::Bev => "BEV",
            IouMode::ThreeD => "3D",
        })
    }
}

/// Detections and ground truths of one frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameResult {
    pub detections: Vec<Detection>,
    pub gts: Vec<GtBox>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApValue {
    pub ap: f64,
    pub num_gt: usize,
    pub num_det: usize,
}

/// All-point interpolated AP of one class over `frames`.
///
/// Detections are visited by descending score (ties: frame, then anchor);
/// each takes the highest-IoU unmatched ground truth of its class in its
/// frame if that IoU reaches `threshold`. Returns `None` when there are
/// neither ground truths nor detections.
pub fn average_precision(frames: &[FrameResult], class: usize, mode: IouMode, threshold: f64) -> Option<ApValue> {
    let mut dets: Vec<(usize, &Detection)> = frames
        .iter()
        .enumerate()
        .flat_map(|(fi, f)| f.detections.iter().filter(|d| d.class == class).map(move |d| (fi, d)))
        .collect();
    dets.sort_by(|a, b| {
        b.1.score
            .partial_cmp(&a.1.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
            .then(a.1.anchor.cmp(&b.1.anchor))
    });
    let num_gt: usize = frames.iter().map(|f| f.gts.iter().filter(|g| g.class == class).count()).sum();
    if num_gt == 0 && dets.is_empty() {
        return None;
    }
    let mut matched: Vec<Vec<bool>> = frames.iter().map(|f| vec![false; f.gts.len()]).collect();
    let mut tp = Vec::with_capacity(dets.len());
    for (fi, d) in &dets {
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in frames[*fi].gts.iter().enumerate() {
            if g.class != class || matched[*fi][gi] {
                continue;
            }
            let iou = mode.iou(&d.bbox, &g.bbox);
            if iou >= threshold && best.map_or(true, |(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        match best {
            Some((gi, _)) => {
                matched[*fi][gi] = true;
                tp.push(true);
            }
            None => tp.push(false),
        }
    }
    Some(ApValue {
        ap: ap_from_matches(&tp, num_gt),
        num_gt,
        num_det: dets.len(),
    })
}

/// All-point interpolated area under the precision-recall curve of a ranked
/// list of true/false positives.
pub fn ap_from_matches(tp: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(tp.len());
    let mut recall = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (i, t) in tp.iter().enumerate() {
        hits += *t as usize;
        precision.push(hits as f64 / (i + 1) as f64);
        recall.push(hits as f64 / num_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        if *r > prev_r {
            ap += (r - prev_r) * p;
            prev_r = *r;
        }
    }
    ap.clamp(0.0, 1.0)
}

/// One AP cell of a report.
#[derive(Clone, Debug, PartialEq)]
pub struct ApRow {
    pub class: String,
    pub mode: IouMode,
    pub iou: f64,
    /// Evaluation label, e.g. `CLR/all` or `LR/heavy_snow`.
    pub condition: String,
    pub value: Option<ApValue>,
}

/// AP for every class, both IoU modes and both thresholds, overall and per
/// condition label. `conditions[i]` labels `frames[i]`.
pub fn ap_report(
    frames: &[FrameResult],
    conditions: &[String],
    class_names: &[String],
    prefix: &str,
) -> Vec<ApRow> {
    assert_eq!(frames.len(), conditions.len());
    let mut labels: Vec<&String> = conditions.iter().collect();
    labels.sort();
    labels.dedup();
    let mut rows = Vec::new();
    for (ci, name) in class_names.iter().enumerate() {
        for mode in [IouMode::Bev, IouMode::ThreeD] {
            for iou in [0.3, 0.5] {
                rows.push(ApRow {
                    class: name.clone(),
                    mode,
                    iou,
                    condition: format!("{prefix}/all"),
                    value: average_precision(frames, ci, mode, iou),
                });
                for label in &labels {
                    let subset: Vec<FrameResult> = frames
                        .iter()
                        .zip(conditions)
                        .filter(|(_, c)| c == label)
                        .map(|(f, _)| f.clone())
                        .collect();
                    rows.push(ApRow {
                        class: name.clone(),
                        mode,
                        iou,
                        condition: format!("{prefix}/{label}"),
                        value: average_precision(&subset, ci, mode, iou),
                    });
                }
            }
        }
    }
    rows
}

pub const AP_HEADER: &str = "class,mode,iou,condition,ap,num_gt,num_det";

/// Writes AP rows; undefined cells print `skip` for the AP.
pub fn write_ap_csv<W: Write>(rows: &[ApRow], config_hash: &str, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "# config_hash={config_hash} ap=all-point-interpolated")?;
    writeln!(w, "{AP_HEADER}")?;
    for r in rows {
        let (ap, g, d) = match r.value {
            Some(v) => (format!("{:.9}", v.ap), v.num_gt, v.num_det),
            None => ("skip".to_string(), 0, 0),
        };
        writeln!(w, "{},{},{},{},{},{},{}", r.class, r.mode, r.iou, r.condition, ap, g, d)?;
    }
    Ok(())
}
