use rand::Rng;

use super::config::FusionConfig;
use super::types::Sensor;
use crate::error::{AsfError, Result};
use crate::numerics::{AttentionParams, Graph, LayerNormParams, Linear, ParamId, ParamStore, Tensor, Var};

/// `LN → (Linear → GeLU)^n → LN`, the shape shared by the canonical
/// projection and post-feature normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionStack {
    pub ln_in: LayerNormParams,
    pub proj: Vec<Linear>,
    pub ln_out: LayerNormParams,
}

impl ProjectionStack {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_width: usize,
        out_width: usize,
        repeats: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if repeats == 0 {
            return Err(AsfError::Config(format!("{name}: need at least one projection")));
        }
        let ln_in = LayerNormParams::init(store, &format!("{name}.ln_in"), in_width)?;
        let mut proj = Vec::with_capacity(repeats);
        for i in 0..repeats {
            let fan_in = if i == 0 { in_width } else { out_width };
            proj.push(Linear::init(store, &format!("{name}.proj{i}"), fan_in, out_width, rng)?);
        }
        let ln_out = LayerNormParams::init(store, &format!("{name}.ln_out"), out_width)?;
        Ok(Self { ln_in, proj, ln_out })
    }

    pub fn in_width(&self, store: &ParamStore) -> usize {
        store.value(self.ln_in.gamma).len()
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let (_, width) = g.value(x).dims2()?;
        if width != self.in_width(store) {
            return Err(AsfError::Config(format!(
                "projection expects width {}, got {width}",
                self.in_width(store)
            )));
        }
        let mut h = self.ln_in.forward(g, store, x)?;
        for lin in &self.proj {
            h = lin.forward(g, store, h)?;
            h = g.gelu(h)?;
        }
        self.ln_out.forward(g, store, h)
    }
}

/// Every trainable tensor of the fusion stage.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionParams {
    pub config: FusionConfig,
    /// Channel count each sensor's canonical projection was built for.
    pub channels: [usize; 3],
    pub ucp: [ProjectionStack; 3],
    /// One `N_q × C_u` reference query per bank.
    pub query_banks: Vec<ParamId>,
    pub attention: AttentionParams,
    pub post_norm: ProjectionStack,
}

impl FusionParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        config: FusionConfig,
        channels: [usize; 3],
        rng: &mut R,
    ) -> Result<Self> {
        let cpp = config.cells_per_patch();
        let mut make_ucp = |s: Sensor, rng: &mut R| {
            ProjectionStack::init(
                store,
                &format!("ucp.{}", s.name()),
                channels[s.index()] * cpp,
                config.c_u,
                config.n_u,
                rng,
            )
        };
        let ucp = [
            make_ucp(Sensor::Camera, rng)?,
            make_ucp(Sensor::Lidar, rng)?,
            make_ucp(Sensor::Radar, rng)?,
        ];
        let query_banks = (0..config.n_p)
            .map(|b| {
                store.add(
                    format!("casap.query{b}"),
                    Tensor::randn(&[config.n_q, config.c_u], 1.0, rng),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let attention = AttentionParams::init(store, "casap.attn", config.c_u, rng)?;
        let post_norm = ProjectionStack::init(store, "pn", config.c_u, config.c_u, config.n_n, rng)?;
        Ok(Self {
            config,
            channels,
            ucp,
            query_banks,
            attention,
            post_norm,
        })
    }

    pub fn ucp(&self, s: Sensor) -> &ProjectionStack {
        &self.ucp[s.index()]
    }

    /// Parameter ids of one sensor's canonical projection.
    pub fn ucp_param_ids(&self, s: Sensor) -> Vec<ParamId> {
        let u = self.ucp(s);
        let mut ids = vec![u.ln_in.gamma, u.ln_in.beta, u.ln_out.gamma, u.ln_out.beta];
        for l in &u.proj {
            ids.push(l.weight);
            ids.push(l.bias);
        }
        ids
    }
}
