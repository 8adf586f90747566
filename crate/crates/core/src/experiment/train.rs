use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::AsfModel;
use crate::error::{AsfError, Result};
use crate::fusion::SensorSet;
use crate::headloss::{scl_loss, DetectionTargets};
use crate::numerics::{AdamW, Graph};
use crate::scenes::{mix_seed, Frame};

pub const LOSS_HEADER: &str = "step,combo,cls_loss,reg_loss,total";

/// Batch-mean loss of one combination at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct LossRow {
    pub step: u64,
    pub combo: SensorSet,
    pub cls: f64,
    pub reg: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub steps: u64,
    pub losses: Vec<LossRow>,
    pub checkpoints: Vec<PathBuf>,
    pub seconds: f64,
}

impl TrainReport {
    /// Mean summed loss over the last `n` steps.
    pub fn tail_loss(&self, n: u64) -> f64 {
        let from = self.steps.saturating_sub(n) + 1;
        let rows: Vec<&LossRow> = self.losses.iter().filter(|r| r.step >= from).collect();
        let steps = rows.iter().map(|r| r.step).collect::<std::collections::BTreeSet<_>>().len();
        rows.iter().map(|r| r.total).sum::<f64>() / steps.max(1) as f64
    }

    pub fn write_loss_csv(&self, path: &Path, config_hash: &str) -> Result<()> {
        let mut s = format!("# config_hash={config_hash}\n{LOSS_HEADER}\n");
        for r in &self.losses {
            let _ = writeln!(s, "{},{},{:.9},{:.9},{:.9}", r.step, r.combo.code(), r.cls, r.reg, r.total);
        }
        fs::write(path, s).map_err(|e| AsfError::io(path, e))
    }
}

/// Combinations trained on: all seven with SCL, the full set otherwise.
pub fn training_combos(scl: bool) -> Vec<SensorSet> {
    if scl {
        SensorSet::COMBINATIONS.to_vec()
    } else {
        vec![SensorSet::FULL]
    }
}

/// Trains `model` in place on `frames`.
///
/// With `out_dir`, checkpoints go to `ckpt_NNNNNN.bin` every
/// `checkpoint_every` steps and to `checkpoint.bin` at the end. A
/// non-finite value anywhere in a step aborts with `NanLoss`, naming the
/// last checkpoint written.
pub fn train(model: &mut AsfModel, frames: &[Frame], out_dir: Option<&Path>) -> Result<TrainReport> {
    let cfg = model.config.training.clone();
    let start = Instant::now();
    let targets: Vec<DetectionTargets> = frames
        .iter()
        .map(|f| DetectionTargets::build(&model.anchors, &f.scene.objects, &model.config.head))
        .collect();
    let combos = training_combos(cfg.scl);
    let opt = AdamW {
        lr: cfg.lr,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.eps,
        weight_decay: cfg.weight_decay,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(model.config.seed, 0x7a11));
    let mut order: Vec<usize> = (0..frames.len()).collect();
    let mut report = TrainReport::default();
    let mut last_good = "none".to_string();
    let mut step = 0u64;
    'epochs: for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch) {
            step += 1;
            let nan = |last_good: &str| AsfError::NanLoss {
                step,
                last_good: last_good.to_string(),
            };
            model.store.zero_grad();
            let mut sums: Vec<LossRow> = Vec::new();
            let share = 1.0 / batch.len() as f64;
            for &i in batch {
                let f = &frames[i];
                let mut g = Graph::new();
                let out = scl_loss(&mut g, &model.store, &model.as_model(), &f.bundle, &f.mask(), &targets[i], &combos)
                    .map_err(|e| match e {
                        AsfError::NonFinite(_) => nan(&last_good),
                        other => other,
                    })?;
                let loss = g.scale(out.total, share)?;
                g.backward(loss, &mut model.store).map_err(|e| match e {
                    AsfError::NonFinite(_) => nan(&last_good),
                    other => other,
                })?;
                for c in out.breakdown {
                    match sums.iter_mut().find(|r| r.combo == c.combo) {
                        Some(r) => {
                            r.cls += c.cls * share;
                            r.reg += c.reg * share;
                            r.total += c.total * share;
                        }
                        None => sums.push(LossRow {
                            step,
                            combo: c.combo,
                            cls: c.cls * share,
                            reg: c.reg * share,
                            total: c.total * share,
                        }),
                    }
                }
            }
            if sums.iter().any(|r| !r.total.is_finite())
                || model.store.params().iter().any(|p| p.grad.data().iter().any(|v| !v.is_finite()))
            {
                return Err(nan(&last_good));
            }
            opt.step(&mut model.store);
            sums.sort_by_key(|r| SensorSet::COMBINATIONS.iter().position(|c| *c == r.combo));
            report.losses.extend(sums);
            if let Some(dir) = out_dir {
                if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every as u64 == 0 {
                    let p = dir.join(format!("ckpt_{step:06}.bin"));
                    model.save(&p)?;
                    last_good = p.display().to_string();
                    report.checkpoints.push(p);
                }
            }
            if cfg.max_steps > 0 && step >= cfg.max_steps as u64 {
                break 'epochs;
            }
        }
    }
    report.steps = step;
    if let Some(dir) = out_dir {
        let p = dir.join("checkpoint.bin");
        model.save(&p)?;
        report.checkpoints.push(p);
    }
    report.seconds = start.elapsed().as_secs_f64();
    Ok(report)
}
