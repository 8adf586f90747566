use rand::Rng;
use serde::{Deserialize, Serialize};

use super::anchors::{AnchorGrid, BevGrid, ClassPrior};
use super::boxes::BOX_CODE_SIZE;
use crate::error::{AsfError, Result};
use crate::numerics::{Graph, Linear, ParamStore, Tensor, Var, GATHER_ZERO};

/// Detection head, loss and post-processing settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadConfig {
    pub classes: Vec<ClassPrior>,
    /// Trunk width.
    pub hidden: usize,
    /// Trunk depth: one 3×3 layer followed by `trunk_layers − 1` 1×1 layers.
    pub trunk_layers: usize,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    pub smooth_l1_beta: f64,
    pub pos_iou: f64,
    pub neg_iou: f64,
    /// Initial foreground probability encoded in the classifier bias.
    pub cls_prior: f64,
    pub score_threshold: f64,
    pub nms_iou: f64,
    pub max_detections: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            classes: ClassPrior::desk_classes(),
            hidden: 64,
            trunk_layers: 2,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
            smooth_l1_beta: 1.0,
            pos_iou: 0.6,
            neg_iou: 0.45,
            cls_prior: 0.01,
            score_threshold: 0.05,
            nms_iou: 0.1,
            max_detections: 50,
        }
    }
}

impl HeadConfig {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Anchors per BEV cell.
    pub fn anchors_per_cell(&self) -> usize {
        self.num_classes() * 2
    }

    pub fn anchor_grid(&self, grid: BevGrid) -> AnchorGrid {
        AnchorGrid::new(grid, &self.classes)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AsfError::Config(m));
        if self.classes.is_empty() {
            return bad("head needs at least one class".into());
        }
        for c in &self.classes {
            if !(c.xl > 0.0 && c.yl > 0.0 && c.zl > 0.0) {
                return bad(format!("class {} prior sizes must be positive", c.name));
            }
        }
        if self.hidden == 0 || self.trunk_layers == 0 {
            return bad("head trunk must have positive width and depth".into());
        }
        if !(0.0 <= self.neg_iou && self.neg_iou <= self.pos_iou && self.pos_iou <= 1.0) {
            return bad(format!(
                "matching thresholds need 0 ≤ neg ({}) ≤ pos ({}) ≤ 1",
                self.neg_iou, self.pos_iou
            ));
        }
        if !(self.cls_prior > 0.0 && self.cls_prior < 1.0) {
            return bad("cls_prior must lie in (0, 1)".into());
        }
        if !(self.smooth_l1_beta > 0.0) || self.focal_gamma < 0.0 || !(0.0..=1.0).contains(&self.focal_alpha) {
            return bad("loss hyper-parameters out of range".into());
        }
        Ok(())
    }
}

/// Trainable weights of the detection head.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams {
    pub in_channels: usize,
    pub anchors_per_cell: usize,
    pub trunk: Vec<Linear>,
    pub cls: Linear,
    pub reg: Linear,
}

impl HeadParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        config: &HeadConfig,
        in_channels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let mut trunk = Vec::with_capacity(config.trunk_layers);
        for i in 0..config.trunk_layers {
            let fan_in = if i == 0 { in_channels * 9 } else { config.hidden };
            trunk.push(Linear::init(store, &format!("head.trunk{i}"), fan_in, config.hidden, rng)?);
        }
        let a = config.anchors_per_cell();
        let cls = Linear::init(store, "head.cls", config.hidden, a, rng)?;
        let bias = -((1.0 - config.cls_prior) / config.cls_prior).ln();
        store.set_value(cls.bias, Tensor::filled(&[a], bias))?;
        let reg = Linear::init(store, "head.reg", config.hidden, a * BOX_CODE_SIZE, rng)?;
        // small initial deltas keep early decoded boxes near their anchors
        let w = store.value(reg.weight).data().iter().map(|v| v * 0.1).collect();
        store.set_value(reg.weight, Tensor::new(store.value(reg.weight).shape().to_vec(), w)?)?;
        Ok(Self {
            in_channels,
            anchors_per_cell: a,
            trunk,
            cls,
            reg,
        })
    }
}

/// Per-anchor raw outputs.
#[derive(Clone, Copy, Debug)]
pub struct HeadOutput {
    /// `(H·W) × anchors_per_cell`; flattened index is the anchor index.
    pub logits: Var,
    /// `(H·W) × (anchors_per_cell·8)`; anchor `a` owns `[8a, 8a+8)`.
    pub deltas: Var,
}

/// Gather indices turning a `C×H×W` map into `(H·W) × (C·9)` 3×3
/// neighbourhoods with zero padding.
pub fn im2col_index(channels: usize, height: usize, width: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(height * width * channels * 9);
    for r in 0..height {
        for c in 0..width {
            for ch in 0..channels {
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                        if rr < 0 || cc < 0 || rr >= height as i64 || cc >= width as i64 {
                            idx.push(GATHER_ZERO);
                        } else {
                            idx.push((ch * height + rr as usize) * width + cc as usize);
                        }
                    }
                }
            }
        }
    }
    idx
}

/// Shared 3×3 trunk and two sibling predictors on a `C×H×W` map.
pub fn head_forward(g: &mut Graph, store: &ParamStore, params: &HeadParams, fm: Var) -> Result<HeadOutput> {
    let shape = g.shape(fm).to_vec();
    if shape.len() != 3 {
        return Err(AsfError::Dimension(format!("head input must be C×H×W, got {shape:?}")));
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    if c != params.in_channels {
        return Err(AsfError::Config(format!(
            "head built for {} input channels, fused map has {c}",
            params.in_channels
        )));
    }
    let cols = g.gather(fm, im2col_index(c, h, w), &[h * w, c * 9])?;
    let mut x = cols;
    for lin in &params.trunk {
        x = lin.forward(g, store, x)?;
        x = g.gelu(x)?;
    }
    let logits = params.cls.forward(g, store, x)?;
    let deltas = params.reg.forward(g, store, x)?;
    Ok(HeadOutput { logits, deltas })
}
