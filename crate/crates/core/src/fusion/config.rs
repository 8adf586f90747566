use serde::{Deserialize, Serialize};

use super::patch::PatchLayout;
use crate::error::{AsfError, Result};

/// Hyper-parameters of the fusion stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    pub patch_h: usize,
    pub patch_w: usize,
    /// Width of the unified canonical space.
    pub c_u: usize,
    /// Patch multiplier: number of independent reference-query banks.
    pub n_p: usize,
    /// Attention heads.
    pub n_h: usize,
    /// Projection repetitions inside the per-sensor canonical projection.
    pub n_u: usize,
    /// Projection repetitions inside post-feature normalization.
    pub n_n: usize,
    /// Reference queries per bank.
    pub n_q: usize,
}

impl Default for FusionConfig {
    /// Best ablation setting: P=2, C_u=256, n_p=8, n_h=16.
    fn default() -> Self {
        Self {
            patch_h: 2,
            patch_w: 2,
            c_u: 256,
            n_p: 8,
            n_h: 16,
            n_u: 2,
            n_n: 2,
            n_q: 1,
        }
    }
}

impl FusionConfig {
    /// Laptop-sized setting used by tests and the desk preset.
    pub fn desk() -> Self {
        Self {
            c_u: 64,
            n_p: 2,
            n_h: 4,
            ..Self::default()
        }
    }

    pub fn cells_per_patch(&self) -> usize {
        self.patch_h * self.patch_w
    }

    /// `C_q = C_u / (P_H·P_W)`.
    pub fn c_q(&self) -> usize {
        self.c_u / self.cells_per_patch()
    }

    /// Channels of the fused map, `n_p·C_q`.
    pub fn fused_channels(&self) -> usize {
        self.n_p * self.c_q()
    }

    pub fn layout(&self, height: usize, width: usize) -> Result<PatchLayout> {
        PatchLayout::new(height, width, self.patch_h, self.patch_w)
    }

    /// Checks every divisibility and positivity constraint for an `H×W` grid.
    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        self.layout(height, width)?;
        let checks = [
            (self.c_u > 0, "c_u must be positive".to_string()),
            (self.n_p > 0, "n_p must be positive".to_string()),
            (self.n_q > 0, "n_q must be positive".to_string()),
            (
                self.n_h > 0 && self.c_u % self.n_h == 0,
                format!("divisibility: c_u={} not divisible by n_h={}", self.c_u, self.n_h),
            ),
            (
                self.c_u % self.cells_per_patch() == 0,
                format!(
                    "divisibility: c_u={} not divisible by P_H·P_W={}",
                    self.c_u,
                    self.cells_per_patch()
                ),
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(AsfError::Config(msg));
            }
        }
        Ok(())
    }
}
