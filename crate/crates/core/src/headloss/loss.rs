use super::anchors::AnchorGrid;
use super::boxes::{encode_box, Box3d, BOX_CODE_SIZE};
use super::head::{head_forward, HeadConfig, HeadOutput, HeadParams};
use crate::error::{AsfError, Result};
use crate::fusion::{asf_forward, AvailabilityMask, FusionParams, SensorBundle, SensorSet};
use crate::metrics::rotated_iou_bev;
use crate::numerics::{Graph, ParamStore, Var, FOCAL_EPS};

/// `−α_t (1 − p_t)^γ ln p_t` for a probability `p`, clamped to
/// `[ε, 1 − ε]`.
pub fn focal_loss(p: f64, target: f64, alpha: f64, gamma: f64) -> f64 {
    let p = p.clamp(FOCAL_EPS, 1.0 - FOCAL_EPS);
    let (pt, at) = if target >= 0.5 { (p, alpha) } else { (1.0 - p, 1.0 - alpha) };
    -at * (1.0 - pt).powf(gamma) * pt.ln()
}

/// Sum over elements of `0.5d²/β` when `|d| < β`, else `|d| − 0.5β`.
pub fn smooth_l1(pred: &[f64], target: &[f64], beta: f64) -> f64 {
    assert_eq!(pred.len(), target.len(), "smooth_l1 length mismatch");
    pred.iter()
        .zip(target)
        .map(|(p, t)| {
            let d = (p - t).abs();
            if d < beta {
                0.5 * d * d / beta
            } else {
                d - 0.5 * beta
            }
        })
        .sum()
}

/// A ground-truth object.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GtBox {
    pub bbox: Box3d,
    pub class: usize,
}

/// Assignment of one anchor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnchorLabel {
    Positive(usize),
    Negative,
    Ignore,
}

/// Per-class IoU assignment of anchors to ground truths.
///
/// An anchor is positive for the GT of its class it overlaps most (ties to
/// the lower GT index) when that IoU reaches `pos_iou`, negative below
/// `neg_iou`, ignored in between. Each GT additionally claims its
/// best-overlapping anchor (ties to the lower anchor index); later GTs win
/// when two claim the same anchor.
pub fn match_anchors(anchors: &AnchorGrid, gts: &[GtBox], pos_iou: f64, neg_iou: f64) -> Vec<AnchorLabel> {
    let n = anchors.len();
    let mut best = vec![0.0f64; n];
    let mut best_gt = vec![usize::MAX; n];
    let mut forced = Vec::with_capacity(gts.len());
    let anchor_reach = anchors
        .anchors()
        .iter()
        .map(Box3d::bev_radius)
        .fold(0.0, f64::max);
    for (j, gt) in gts.iter().enumerate() {
        let near = anchors.near(gt.bbox.x, gt.bbox.y, gt.bbox.bev_radius() + anchor_reach, gt.class);
        let mut arg: Option<(usize, f64)> = None;
        for i in near {
            let iou = rotated_iou_bev(anchors.anchor(i), &gt.bbox);
            if iou > best[i] {
                best[i] = iou;
                best_gt[i] = j;
            }
            if iou > 0.0 && arg.map_or(true, |(ai, av)| iou > av || (iou == av && i < ai)) {
                arg = Some((i, iou));
            }
        }
        forced.push(arg.map(|a| a.0));
    }
    let mut labels: Vec<AnchorLabel> = (0..n)
        .map(|i| {
            if best_gt[i] != usize::MAX && best[i] >= pos_iou {
                AnchorLabel::Positive(best_gt[i])
            } else if best[i] >= neg_iou && best_gt[i] != usize::MAX {
                AnchorLabel::Ignore
            } else {
                AnchorLabel::Negative
            }
        })
        .collect();
    for (j, f) in forced.into_iter().enumerate() {
        if let Some(i) = f {
            labels[i] = AnchorLabel::Positive(j);
        }
    }
    labels
}

/// Classification and regression targets for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionTargets {
    pub cls: Vec<f64>,
    pub cls_weight: Vec<f64>,
    pub reg: Vec<f64>,
    pub reg_weight: Vec<f64>,
    pub num_pos: usize,
}

impl DetectionTargets {
    pub fn build(anchors: &AnchorGrid, gts: &[GtBox], cfg: &HeadConfig) -> Self {
        let labels = match_anchors(anchors, gts, cfg.pos_iou, cfg.neg_iou);
        let n = anchors.len();
        let mut t = Self {
            cls: vec![0.0; n],
            cls_weight: vec![1.0; n],
            reg: vec![0.0; n * BOX_CODE_SIZE],
            reg_weight: vec![0.0; n * BOX_CODE_SIZE],
            num_pos: 0,
        };
        for (i, l) in labels.iter().enumerate() {
            match *l {
                AnchorLabel::Positive(j) => {
                    t.cls[i] = 1.0;
                    t.num_pos += 1;
                    let code = encode_box(&gts[j].bbox, anchors.anchor(i));
                    t.reg[i * BOX_CODE_SIZE..(i + 1) * BOX_CODE_SIZE].copy_from_slice(&code);
                    t.reg_weight[i * BOX_CODE_SIZE..(i + 1) * BOX_CODE_SIZE].fill(1.0);
                }
                AnchorLabel::Ignore => t.cls_weight[i] = 0.0,
                AnchorLabel::Negative => {}
            }
        }
        t
    }

    pub fn normalizer(&self) -> f64 {
        self.num_pos.max(1) as f64
    }
}

/// Focal classification and smooth-L1 regression terms for one head output.
pub fn detection_loss(
    g: &mut Graph,
    out: &HeadOutput,
    targets: &DetectionTargets,
    cfg: &HeadConfig,
) -> Result<(Var, Var)> {
    let norm = targets.normalizer();
    let cls = g.focal_loss(
        out.logits,
        &targets.cls,
        &targets.cls_weight,
        cfg.focal_alpha,
        cfg.focal_gamma,
        norm,
    )?;
    let reg = g.smooth_l1(out.deltas, &targets.reg, &targets.reg_weight, cfg.smooth_l1_beta, norm)?;
    Ok((cls, reg))
}

/// Loss of one sensor combination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComboLoss {
    pub combo: SensorSet,
    pub cls: f64,
    pub reg: f64,
    pub total: f64,
}

pub struct SclOutput {
    pub total: Var,
    pub breakdown: Vec<ComboLoss>,
}

/// Both trainable stages.
pub struct Model<'a> {
    pub fusion: &'a FusionParams,
    pub head: &'a HeadParams,
    pub head_config: &'a HeadConfig,
}

/// Sum of detection losses over `combos`, each from its own fusion pass
/// with the frame's mask restricted to that combination. Combinations with
/// no present sensor are skipped.
pub fn scl_loss(
    g: &mut Graph,
    store: &ParamStore,
    model: &Model,
    bundle: &SensorBundle,
    mask: &AvailabilityMask,
    targets: &DetectionTargets,
    combos: &[SensorSet],
) -> Result<SclOutput> {
    let mut total: Option<Var> = None;
    let mut breakdown = Vec::with_capacity(combos.len());
    for &combo in combos {
        let m = mask.restrict(combo);
        if m.present().is_empty() {
            continue;
        }
        let fwd = asf_forward(g, store, model.fusion, bundle, &m)?;
        let out = head_forward(g, store, model.head, fwd.fused)?;
        let (cls, reg) = detection_loss(g, &out, targets, model.head_config)?;
        let term = g.add(cls, reg)?;
        let (c, r, t) = (g.value(cls).item()?, g.value(reg).item()?, g.value(term).item()?);
        breakdown.push(ComboLoss {
            combo,
            cls: c,
            reg: r,
            total: t,
        });
        total = Some(match total {
            None => term,
            Some(acc) => g.add(acc, term)?,
        });
    }
    let total = total.ok_or(AsfError::EmptyKeys)?;
    Ok(SclOutput { total, breakdown })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::headloss::anchors::{BevGrid, ClassPrior};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn focal_closed_forms() {
        let v = focal_loss(0.9, 1.0, 0.25, 2.0);
        assert!((v - 0.25 * 0.01 * -(0.9f64.ln())).abs() < 1e-15);
        let bce = -(0.3f64.ln());
        assert!((focal_loss(0.3, 1.0, 0.5, 0.0) - 0.5 * bce).abs() < 1e-15);
        assert!(focal_loss(1.0 - 1e-12, 1.0, 0.25, 2.0) < 1e-12);
        assert!(focal_loss(0.0, 1.0, 0.25, 2.0).is_finite());
    }

    #[test]
    fn focal_gamma_zero_is_weighted_bce() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let p: f64 = r.gen_range(0.001..0.999);
            let t = if r.gen_bool(0.5) { 1.0 } else { 0.0 };
            let alpha: f64 = r.gen_range(0.0..1.0);
            let bce = -(t * p.ln() + (1.0 - t) * (1.0 - p).ln());
            let w = if t == 1.0 { alpha } else { 1.0 - alpha };
            assert!((focal_loss(p, t, alpha, 0.0) - w * bce).abs() < 1e-9);
        }
    }

    #[test]
    fn smooth_l1_closed_forms_and_continuity() {
        assert_eq!(smooth_l1(&[1.0], &[1.0], 1.0), 0.0);
        assert!((smooth_l1(&[0.5], &[0.0], 1.0) - 0.125).abs() < 1e-15);
        assert!((smooth_l1(&[2.0], &[0.0], 1.0) - 1.5).abs() < 1e-15);
        let h = 1e-7;
        let f = |d: f64| smooth_l1(&[d], &[0.0], 1.0);
        let left = (f(1.0) - f(1.0 - h)) / h;
        let right = (f(1.0 + h) - f(1.0)) / h;
        assert!((left - right).abs() < 1e-6);
        assert!((f(1.0 - 1e-12) - f(1.0 + 1e-12)).abs() < 1e-9);
    }

    fn anchors() -> AnchorGrid {
        AnchorGrid::new(BevGrid::desk(), &ClassPrior::desk_classes())
    }

    #[test]
    fn no_gts_means_all_negative() {
        let a = anchors();
        assert!(match_anchors(&a, &[], 0.6, 0.45).iter().all(|l| *l == AnchorLabel::Negative));
    }

    #[test]
    fn anchor_identical_to_gt_is_positive() {
        let a = anchors();
        let i = a.index(4, 7, 1, 0);
        let gt = GtBox { bbox: *a.anchor(i), class: 1 };
        let labels = match_anchors(&a, &[gt], 0.6, 0.45);
        assert_eq!(labels[i], AnchorLabel::Positive(0));
        let t = DetectionTargets::build(&a, &[gt], &HeadConfig::default());
        assert!(t.num_pos >= 1);
        let code = &t.reg[i * 8..i * 8 + 8];
        assert!(code[..6].iter().all(|v| v.abs() < 1e-12));
        assert!((code[6] - 1.0).abs() < 1e-12);
    }
}
