//! Patch partitioning of BEV grids and the inverse reshape back to a grid.
//!
//! A patch vector concatenates its cells in `(channel, row, col)` order and
//! patches are numbered row-major over the patch grid.

use super::types::{FeatureMap, Sensor};
use crate::error::{AsfError, Result};
use crate::numerics::{Graph, Tensor, Var};

/// Spatial partition of an `H×W` grid into `P_H×P_W` patches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchLayout {
    pub height: usize,
    pub width: usize,
    pub patch_h: usize,
    pub patch_w: usize,
}

impl PatchLayout {
    pub fn new(height: usize, width: usize, patch_h: usize, patch_w: usize) -> Result<Self> {
        if patch_h == 0 || patch_w == 0 || height % patch_h != 0 || width % patch_w != 0 {
            return Err(AsfError::Config(format!(
                "divisibility: {height}×{width} grid cannot be split into {patch_h}×{patch_w} patches"
            )));
        }
        Ok(Self {
            height,
            width,
            patch_h,
            patch_w,
        })
    }

    pub fn grid_rows(&self) -> usize {
        self.height / self.patch_h
    }

    pub fn grid_cols(&self) -> usize {
        self.width / self.patch_w
    }

    pub fn num_patches(&self) -> usize {
        self.grid_rows() * self.grid_cols()
    }

    pub fn cells_per_patch(&self) -> usize {
        self.patch_h * self.patch_w
    }

    /// `(patch_row, patch_col)` of patch `i`.
    pub fn patch_position(&self, i: usize) -> (usize, usize) {
        (i / self.grid_cols(), i % self.grid_cols())
    }

    /// Flat `C×H×W` index feeding element `e` of patch `i` for a map with
    /// `channels` channels.
    fn source_index(&self, i: usize, e: usize) -> usize {
        let cpp = self.cells_per_patch();
        let (ch, rem) = (e / cpp, e % cpp);
        let (dr, dc) = (rem / self.patch_w, rem % self.patch_w);
        let (pr, pc) = self.patch_position(i);
        let r = pr * self.patch_h + dr;
        let c = pc * self.patch_w + dc;
        (ch * self.height + r) * self.width + c
    }

    /// Gather index turning a `C×H×W` map into `N_p × (C·P_H·P_W)` patches.
    pub fn patchify_index(&self, channels: usize) -> Vec<usize> {
        let len = channels * self.cells_per_patch();
        (0..self.num_patches())
            .flat_map(|i| (0..len).map(move |e| (i, e)))
            .map(|(i, e)| self.source_index(i, e))
            .collect()
    }

    /// Gather index turning `banks·N_p` rows of width `C_q·P_H·P_W` (bank-major)
    /// into a `(banks·C_q)×H×W` grid.
    pub fn assemble_index(&self, banks: usize, c_q: usize) -> Vec<usize> {
        let row_len = c_q * self.cells_per_patch();
        let n = self.num_patches();
        let mut index = Vec::with_capacity(banks * c_q * self.height * self.width);
        for ch in 0..banks * c_q {
            let (bank, cq) = (ch / c_q, ch % c_q);
            for r in 0..self.height {
                for c in 0..self.width {
                    let patch = (r / self.patch_h) * self.grid_cols() + c / self.patch_w;
                    let (dr, dc) = (r % self.patch_h, c % self.patch_w);
                    let col = cq * self.cells_per_patch() + dr * self.patch_w + dc;
                    index.push((bank * n + patch) * row_len + col);
                }
            }
        }
        index
    }
}

/// Sensor-specific patches of one feature map.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSet {
    pub sensor: Sensor,
    pub layout: PatchLayout,
    pub channels: usize,
    /// `N_p × (C_s·P_H·P_W)`.
    pub patches: Tensor,
}

impl PatchSet {
    pub fn num_patches(&self) -> usize {
        self.layout.num_patches()
    }

    /// Grid position of every patch, indexed by patch number.
    pub fn index_map(&self) -> Vec<(usize, usize)> {
        (0..self.num_patches())
            .map(|i| self.layout.patch_position(i))
            .collect()
    }
}

/// Splits a feature map into row-major `P_H×P_W` patches.
pub fn patchify(fm: &FeatureMap, patch_h: usize, patch_w: usize) -> Result<PatchSet> {
    let layout = PatchLayout::new(fm.height(), fm.width(), patch_h, patch_w)?;
    let channels = fm.channels();
    let src = fm.data.data();
    let data = layout
        .patchify_index(channels)
        .into_iter()
        .map(|i| src[i])
        .collect();
    let patches = Tensor::new(
        vec![layout.num_patches(), channels * layout.cells_per_patch()],
        data,
    )?;
    Ok(PatchSet {
        sensor: fm.sensor,
        layout,
        channels,
        patches,
    })
}

/// Exact inverse of [`patchify`].
pub fn unpatchify(ps: &PatchSet) -> Result<FeatureMap> {
    let l = ps.layout;
    let mut data = vec![0.0; ps.channels * l.height * l.width];
    for (j, &src) in l.patchify_index(ps.channels).iter().enumerate() {
        data[src] = ps.patches.data()[j];
    }
    FeatureMap::new(
        ps.sensor,
        Tensor::new(vec![ps.channels, l.height, l.width], data)?,
    )
}

/// Reshapes `n_p·N_p` patch vectors of width `C_u` (bank-major rows) into
/// the fused grid `(n_p·C_q)×H×W` with `C_q = C_u / (P_H·P_W)`.
pub fn assemble_fused_fm(
    g: &mut Graph,
    patches: Var,
    layout: &PatchLayout,
    banks: usize,
) -> Result<Var> {
    let (rows, c_u) = g.value(patches).dims2()?;
    let cpp = layout.cells_per_patch();
    if c_u % cpp != 0 {
        return Err(AsfError::Config(format!(
            "divisibility: C_u={c_u} is not a multiple of P_H·P_W={cpp}"
        )));
    }
    if rows != banks * layout.num_patches() {
        return Err(AsfError::Config(format!(
            "{rows} patch rows but {banks} banks × {} patches expected",
            layout.num_patches()
        )));
    }
    let c_q = c_u / cpp;
    let index = layout.assemble_index(banks, c_q);
    g.gather(patches, index, &[banks * c_q, layout.height, layout.width])
}
