use super::config::FusionConfig;
use super::model::{FusionParams, ProjectionStack};
use super::patch::{assemble_fused_fm, patchify, PatchLayout, PatchSet};
use super::sam::SensorAttentionMap;
use super::types::{AvailabilityMask, Sensor, SensorBundle, SensorSet};
use crate::error::{AsfError, Result};
use crate::numerics::{grouped_cross_attention, Graph, ParamStore, Tensor, Var};

/// Patches of one sensor after projection into the unified space.
#[derive(Clone, Copy, Debug)]
pub struct UnifiedPatchSet {
    pub sensor: Sensor,
    /// `N_p × C_u`.
    pub features: Var,
}

/// Projects one sensor's patches into the unified canonical space.
pub fn ucp_project(
    g: &mut Graph,
    store: &ParamStore,
    stack: &ProjectionStack,
    patches: &PatchSet,
) -> Result<UnifiedPatchSet> {
    let x = g.constant(patches.patches.clone())?;
    let features = stack.forward(g, store, x)?;
    Ok(UnifiedPatchSet {
        sensor: patches.sensor,
        features,
    })
}

/// Output of cross-attention across sensors along patches.
pub struct CasapOutput {
    /// `(n_p·N_p) × C_u`, bank-major rows.
    pub patches: Var,
    pub sam: SensorAttentionMap,
}

/// Per-patch cross-attention of the reference-query banks against the
/// available sensors' unified patches at the same grid position.
///
/// Sensors that are absent in `mask` are dropped before the key set is
/// built, so masking a sensor and omitting its patches are the same
/// computation.
pub fn casap_fuse(
    g: &mut Graph,
    store: &ParamStore,
    params: &FusionParams,
    unified: &[UnifiedPatchSet],
    mask: &AvailabilityMask,
    layout: &PatchLayout,
) -> Result<CasapOutput> {
    let cfg = &params.config;
    let mut keys: Vec<&UnifiedPatchSet> = unified
        .iter()
        .filter(|u| mask.get(u.sensor).is_present())
        .collect();
    keys.sort_by_key(|u| u.sensor);
    if keys.is_empty() {
        return Err(AsfError::EmptyKeys);
    }
    let n = layout.num_patches();
    for u in &keys {
        let (rows, width) = g.value(u.features).dims2()?;
        if rows != n || width != cfg.c_u {
            return Err(AsfError::Dimension(format!(
                "{} unified patches are {rows}×{width}, expected {n}×{}",
                u.sensor, cfg.c_u
            )));
        }
    }
    let present = SensorSet::from_sensors(&keys.iter().map(|u| u.sensor).collect::<Vec<_>>());
    let s = keys.len();
    let c = cfg.c_u;

    // Interleave sensor-major rows into patch-major key groups.
    let stacked = g.concat_rows(&keys.iter().map(|u| u.features).collect::<Vec<_>>())?;
    let mut index = Vec::with_capacity(n * s * c);
    for i in 0..n {
        for si in 0..s {
            let src = (si * n + i) * c;
            index.extend(src..src + c);
        }
    }
    let kv = g.gather(stacked, index, &[n * s, c])?;

    let banks: Vec<Var> = params
        .query_banks
        .iter()
        .map(|&id| g.param(store, id))
        .collect::<Result<_>>()?;
    let queries = g.concat_rows(&banks)?;
    let att = grouped_cross_attention(g, store, &params.attention, queries, kv, cfg.n_h, n)?;

    // Mean over each bank's queries, reordered bank-major.
    let per_patch = cfg.n_p * cfg.n_q;
    let groups = (0..cfg.n_p)
        .flat_map(|b| (0..n).map(move |i| (b, i)))
        .map(|(b, i)| (0..cfg.n_q).map(|q| i * per_patch + b * cfg.n_q + q).collect())
        .collect();
    let pooled = g.pool_rows(att.out, groups)?;

    let inv = 1.0 / (cfg.n_h * cfg.n_q) as f64;
    let mut mass = vec![[0.0; 3]; cfg.n_p * n];
    for b in 0..cfg.n_p {
        for i in 0..n {
            let cell = &mut mass[b * n + i];
            for (ki, u) in keys.iter().enumerate() {
                let mut m = 0.0;
                for h in 0..cfg.n_h {
                    for q in 0..cfg.n_q {
                        m += att.prob(i, h, b * cfg.n_q + q, ki);
                    }
                }
                cell[u.sensor.index()] = m * inv;
            }
        }
    }
    let sam = SensorAttentionMap::new(layout.grid_rows(), layout.grid_cols(), cfg.n_p, present, mass);
    Ok(CasapOutput {
        patches: pooled,
        sam,
    })
}

/// Post-feature normalization applied to every fused patch vector.
pub fn post_normalize(
    g: &mut Graph,
    store: &ParamStore,
    params: &FusionParams,
    x: Var,
) -> Result<Var> {
    params.post_norm.forward(g, store, x)
}

/// Everything produced by one fusion forward pass.
pub struct AsfForward {
    /// `(n_p·C_q) × H × W`.
    pub fused: Var,
    pub sam: SensorAttentionMap,
    pub unified: Vec<UnifiedPatchSet>,
    pub casap: Var,
    pub layout: PatchLayout,
}

/// patchify → canonical projection → CASAP → post-normalization → reshape.
pub fn asf_forward(
    g: &mut Graph,
    store: &ParamStore,
    params: &FusionParams,
    bundle: &SensorBundle,
    mask: &AvailabilityMask,
) -> Result<AsfForward> {
    let cfg: &FusionConfig = &params.config;
    let (h, w) = bundle
        .extent()
        .ok_or_else(|| AsfError::Contract("empty sensor bundle".into()))?;
    cfg.validate(h, w)?;
    let layout = cfg.layout(h, w)?;
    let mut unified = Vec::new();
    for s in Sensor::ALL {
        if !mask.get(s).is_present() {
            continue;
        }
        let fm = bundle.get(s).ok_or_else(|| {
            AsfError::Contract(format!("{s} is marked available but has no feature map"))
        })?;
        if fm.channels() != params.channels[s.index()] {
            return Err(AsfError::Config(format!(
                "{s} map has {} channels, projection built for {}",
                fm.channels(),
                params.channels[s.index()]
            )));
        }
        let ps = patchify(fm, cfg.patch_h, cfg.patch_w)?;
        unified.push(ucp_project(g, store, params.ucp(s), &ps)?);
    }
    let casap = casap_fuse(g, store, params, &unified, mask, &layout)?;
    let normed = post_normalize(g, store, params, casap.patches)?;
    let fused = assemble_fused_fm(g, normed, &layout, cfg.n_p)?;
    Ok(AsfForward {
        fused,
        sam: casap.sam,
        unified,
        casap: casap.patches,
        layout,
    })
}

/// Fused feature map `(n_p·C_q) × H × W`.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedFm(pub Tensor);

/// Inference-only convenience wrapper around [`asf_forward`].
pub fn asf_infer(
    store: &ParamStore,
    params: &FusionParams,
    bundle: &SensorBundle,
    mask: &AvailabilityMask,
) -> Result<(FusedFm, SensorAttentionMap)> {
    let mut g = Graph::new();
    let out = asf_forward(&mut g, store, params, bundle, mask)?;
    Ok((FusedFm(g.value(out.fused).clone()), out.sam))
}
