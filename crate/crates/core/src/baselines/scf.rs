use rand::Rng;

use crate::error::{AsfError, Result};
use crate::fusion::UnifiedPatchSet;
use crate::numerics::{grouped_cross_attention, AttentionParams, Graph, ParamId, ParamStore, Tensor, Var};

/// Sensor-wise cross-attention fusion: object queries attend over every
/// patch of every sensor through a stack of decoder blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct ScfParams {
    pub width: usize,
    pub heads: usize,
    pub num_patches: usize,
    /// `N_obj × C` object queries.
    pub queries: ParamId,
    /// Learned per-sensor, per-patch positional tags, `N_p × C` each.
    pub positions: [ParamId; 3],
    pub blocks: Vec<AttentionParams>,
}

impl ScfParams {
    #[allow(clippy::too_many_arguments)]
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        width: usize,
        heads: usize,
        num_patches: usize,
        n_obj: usize,
        n_td: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if n_td == 0 {
            return Err(AsfError::Config("SCF needs at least one decoder block".into()));
        }
        let queries = store.add("scf.queries", Tensor::randn(&[n_obj, width], 1.0, rng))?;
        let mut pos = Vec::with_capacity(3);
        for s in ["camera", "lidar", "radar"] {
            pos.push(store.add(format!("scf.pos.{s}"), Tensor::randn(&[num_patches, width], 0.02, rng))?);
        }
        let blocks = (0..n_td)
            .map(|i| AttentionParams::init(store, &format!("scf.block{i}"), width, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            width,
            heads,
            num_patches,
            queries,
            positions: [pos[0], pos[1], pos[2]],
            blocks,
        })
    }

    pub fn n_td(&self) -> usize {
        self.blocks.len()
    }
}

/// Runs the decoder stack; returns the refined `N_obj × C` queries.
pub fn scf_decode(g: &mut Graph, store: &ParamStore, params: &ScfParams, unified: &[UnifiedPatchSet]) -> Result<Var> {
    if unified.is_empty() {
        return Err(AsfError::EmptyKeys);
    }
    let mut sorted: Vec<&UnifiedPatchSet> = unified.iter().collect();
    sorted.sort_by_key(|u| u.sensor);
    let mut tagged = Vec::with_capacity(sorted.len());
    for u in sorted {
        if g.shape(u.features) != [params.num_patches, params.width] {
            return Err(AsfError::Dimension(format!(
                "{} patches are {:?}, SCF built for {}×{}",
                u.sensor,
                g.shape(u.features),
                params.num_patches,
                params.width
            )));
        }
        let pos = g.param(store, params.positions[u.sensor.index()])?;
        tagged.push(g.add(u.features, pos)?);
    }
    let kv = g.concat_rows(&tagged)?;
    let mut q = g.param(store, params.queries)?;
    for block in &params.blocks {
        q = grouped_cross_attention(g, store, block, q, kv, params.heads, 1)?.out;
    }
    Ok(q)
}
