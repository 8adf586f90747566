use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use crate::error::{AsfError, Result};
use crate::fusion::{asf_forward, AvailabilityMask, FusionParams, SensorAttentionMap, SensorBundle};
use crate::headloss::{decode_detections, head_forward, AnchorGrid, Detection, HeadParams, Model};
use crate::numerics::checkpoint::{read_records, write_records};
use crate::numerics::{Graph, ParamStore, Tensor};
use crate::scenes::mix_seed;

/// Fusion stage plus detection head, with their parameters.
#[derive(Clone, Debug)]
pub struct AsfModel {
    pub config: ExperimentConfig,
    pub store: ParamStore,
    pub fusion: FusionParams,
    pub head: HeadParams,
    pub anchors: AnchorGrid,
}

/// What one inference call produces.
#[derive(Clone, Debug)]
pub struct Inference {
    pub detections: Vec<Detection>,
    pub sam: SensorAttentionMap,
    /// Fused map, `n_p·C_q × H × W`.
    pub fused: Tensor,
}

impl AsfModel {
    /// Fresh parameters drawn from the config seed.
    pub fn init(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 0x1417));
        let mut store = ParamStore::new();
        let fusion = FusionParams::init(&mut store, config.fusion, config.scenes.channels(), &mut rng)?;
        let head = HeadParams::init(&mut store, &config.head, config.fusion.fused_channels(), &mut rng)?;
        Ok(Self {
            config: config.clone(),
            store,
            fusion,
            head,
            anchors: config.head.anchor_grid(config.scenes.grid),
        })
    }

    pub fn as_model(&self) -> Model<'_> {
        Model {
            fusion: &self.fusion,
            head: &self.head,
            head_config: &self.config.head,
        }
    }

    pub fn infer(&self, bundle: &SensorBundle, mask: &AvailabilityMask) -> Result<Inference> {
        let mut g = Graph::new();
        let fwd = asf_forward(&mut g, &self.store, &self.fusion, bundle, mask)?;
        let out = head_forward(&mut g, &self.store, &self.head, fwd.fused)?;
        let detections = decode_detections(
            g.value(out.logits).data(),
            g.value(out.deltas).data(),
            &self.anchors,
            &self.config.head,
        );
        Ok(Inference {
            detections,
            sam: fwd.sam,
            fused: g.value(fwd.fused).clone(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_records(path, &self.store.named_values(), self.config.precision)
    }

    /// Rebuilds the model for `config` and loads the parameters at `path`.
    /// Any mismatch in names or shapes is an `Incompatible` error.
    pub fn load(config: &ExperimentConfig, path: &Path) -> Result<Self> {
        let mut m = Self::init(config)?;
        let (_, records) = read_records(path)?;
        m.store.load_named(&records).map_err(|e| match e {
            AsfError::Incompatible(msg) => AsfError::Incompatible(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        Ok(m)
    }
}
