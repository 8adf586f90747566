use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AsfError, Result};
use crate::fusion::FusionConfig;
use crate::headloss::{BevGrid, HeadConfig};
use crate::numerics::Precision;
use crate::scenes::{config_hash, SceneConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Sum the loss over all seven sensor combinations.
    pub scl: bool,
    pub train_frames: usize,
    pub eval_frames: usize,
    /// Steps between intermediate checkpoints; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Stop after this many steps; 0 means no cap.
    pub max_steps: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch: 2,
            epochs: 11,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            scl: true,
            train_frames: 500,
            eval_frames: 200,
            checkpoint_every: 0,
            max_steps: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Width of the distance bins of the attention-ratio table, meters.
    pub distance_bin: f64,
    /// Side of the pooled grid in the per-object feature export.
    pub export_pool: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            distance_bin: 3.2,
            export_pool: 4,
        }
    }
}

/// Everything one run depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub precision: Precision,
    pub fusion: FusionConfig,
    pub head: HeadConfig,
    pub scenes: SceneConfig,
    pub training: TrainingConfig,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    /// Laptop-scale: 16×16 grid, C_u=64, n_p=2, n_h=4, 500/200 frames.
    pub fn desk() -> Self {
        Self {
            seed: 0,
            precision: Precision::F64,
            fusion: FusionConfig::desk(),
            head: HeadConfig::default(),
            scenes: SceneConfig::default(),
            training: TrainingConfig {
                epochs: 8,
                ..TrainingConfig::default()
            },
            eval: EvalConfig::default(),
        }
    }

    /// Best ablation setting on a 72 m × 12.8 m corridor at 0.4 m cells.
    pub fn full() -> Self {
        let mut c = Self::desk();
        c.fusion = FusionConfig::default();
        c.head.hidden = 128;
        c.scenes.grid = BevGrid {
            x_min: 0.0,
            y_min: -6.4,
            cell: 0.4,
            rows: 180,
            cols: 32,
        };
        c.scenes.min_objects = 4;
        c.scenes.max_objects = 12;
        c.training = TrainingConfig::default();
        c.eval.distance_bin = 8.0;
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            other => Err(AsfError::Config(format!("unknown preset '{other}' (desk, full)"))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| AsfError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AsfError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            AsfError::Config(m) => AsfError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        config_hash(self)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.scenes.grid;
        if self.seed > i64::MAX as u64 {
            return Err(AsfError::Config("seed must be below 2^63".into()));
        }
        self.fusion.validate(g.rows, g.cols)?;
        self.head.validate()?;
        self.scenes.validate()?;
        if self.head.classes != self.scenes.classes {
            return Err(AsfError::Config("head.classes must equal scenes.classes".into()));
        }
        let t = &self.training;
        if !(t.lr >= 0.0) || t.batch == 0 || !(0.0..1.0).contains(&t.beta1) || !(0.0..1.0).contains(&t.beta2) {
            return Err(AsfError::Config("training: lr ≥ 0, batch ≥ 1, betas in [0, 1) required".into()));
        }
        if !(t.eps > 0.0) || t.weight_decay < 0.0 {
            return Err(AsfError::Config("training: eps > 0 and weight_decay ≥ 0 required".into()));
        }
        if !(self.eval.distance_bin > 0.0) || self.eval.export_pool == 0 {
            return Err(AsfError::Config("eval: distance_bin and export_pool must be positive".into()));
        }
        Ok(())
    }

    /// Applies `section.key=value` overrides by editing the TOML form, so
    /// every field is reachable and unknown keys are still rejected.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc: toml::Table = toml::from_str(&self.to_toml()).expect("own TOML parses");
        for o in overrides {
            let (path, raw) = o
                .split_once('=')
                .ok_or_else(|| AsfError::Config(format!("override '{o}' is not key=value")))?;
            let value: toml::Value = format!("v = {raw}")
                .parse::<toml::Table>()
                .map(|mut t| t.remove("v").expect("just inserted"))
                .unwrap_or_else(|_| toml::Value::String(raw.to_string()));
            let keys: Vec<&str> = path.split('.').collect();
            let mut table = &mut doc;
            for k in &keys[..keys.len() - 1] {
                table = table
                    .get_mut(*k)
                    .and_then(|v| v.as_table_mut())
                    .ok_or_else(|| AsfError::Config(format!("unknown config section '{k}' in '{o}'")))?;
            }
            let last = keys[keys.len() - 1];
            if !table.contains_key(last) {
                return Err(AsfError::Config(format!("unknown config key '{path}'")));
            }
            table.insert(last.to_string(), value);
        }
        Self::from_toml(&toml::to_string(&doc).expect("table serializes"))
    }
}
