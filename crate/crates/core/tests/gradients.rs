//! Analytic gradients against central differences, every trainable op and
//! the full fusion + head + combination loss, 20 seeds each.

mod common;

use asf::fusion::{random_bundle, AvailabilityMask, FusionConfig, FusionParams, SensorSet};
use asf::headloss::{
    head_forward, scl_loss, BevGrid, Box3d, ClassPrior, DetectionTargets, GtBox, HeadConfig, HeadParams, Model,
};
use asf::numerics::gradcheck::check_gradients;
use asf::numerics::{grouped_cross_attention, AttentionParams, Graph, ParamStore, Tensor, Var, GATHER_ZERO};
use asf::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const SEEDS: u64 = 20;

/// Contracts any output with a fixed random probe so every element matters.
fn probe(g: &mut Graph, x: Var, seed: u64) -> Result<Var> {
    let n = g.value(x).len();
    let flat = g.reshape(x, &[1, n])?;
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let p = g.constant(Tensor::randn(&[n, 1], 1.0, &mut r))?;
    let y = g.matmul(flat, p)?;
    g.sum(y)
}

fn check<F>(label: &str, build: impl Fn(&mut ParamStore, &mut ChaCha8Rng) -> F)
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let f = build(&mut store, &mut rng);
        let rep = check_gradients(&mut store, H, &f).unwrap();
        assert!(rep.max_rel_err < TOL, "{label} seed {seed}: {} ({})", rep.max_rel_err, rep.worst);
        assert!(rep.checked > 0);
    }
}

fn param(store: &mut ParamStore, name: &str, shape: &[usize], rng: &mut ChaCha8Rng) -> asf::numerics::ParamId {
    store.add(name, Tensor::randn(shape, 1.0, rng)).unwrap()
}

#[test]
fn matmul_bias_add_scale() {
    check("matmul", |s, r| {
        let (a, b, c, bias) = (
            param(s, "a", &[3, 4], r),
            param(s, "b", &[4, 5], r),
            param(s, "c", &[3, 5], r),
            param(s, "bias", &[5], r),
        );
        move |g: &mut Graph, s: &ParamStore| {
            let (a, b, c, bias) = (g.param(s, a)?, g.param(s, b)?, g.param(s, c)?, g.param(s, bias)?);
            let m = g.matmul(a, b)?;
            let m = g.add_bias(m, bias)?;
            let m = g.add(m, c)?;
            let m = g.scale(m, -0.7)?;
            probe(g, m, 1)
        }
    });
}

#[test]
fn linear_gelu_sigmoid() {
    check("linear", |s, r| {
        let (x, w, b) = (param(s, "x", &[4, 3], r), param(s, "w", &[3, 6], r), param(s, "b", &[6], r));
        move |g: &mut Graph, s: &ParamStore| {
            let (x, w, b) = (g.param(s, x)?, g.param(s, w)?, g.param(s, b)?);
            let y = g.linear(x, w, b)?;
            let y = g.gelu(y)?;
            let y = g.sigmoid(y)?;
            probe(g, y, 2)
        }
    });
}

#[test]
fn layer_norm_and_softmax() {
    check("layer_norm", |s, r| {
        let (x, gm, bt) = (param(s, "x", &[5, 7], r), param(s, "g", &[7], r), param(s, "b", &[7], r));
        move |g: &mut Graph, s: &ParamStore| {
            let (x, gm, bt) = (g.param(s, x)?, g.param(s, gm)?, g.param(s, bt)?);
            let y = g.layer_norm(x, gm, bt, 1e-5)?;
            let y = g.softmax(y)?;
            probe(g, y, 3)
        }
    });
}

#[test]
fn gather_concat_pool() {
    check("gather", |s, r| {
        let (a, b) = (param(s, "a", &[3, 4], r), param(s, "b", &[2, 4], r));
        let mut idx: Vec<usize> = (0..20).map(|_| r.gen_range(0..20)).collect();
        idx[3] = GATHER_ZERO;
        move |g: &mut Graph, s: &ParamStore| {
            let (a, b) = (g.param(s, a)?, g.param(s, b)?);
            let c = g.concat_rows(&[a, b])?;
            let p = g.pool_rows(c, vec![vec![0, 4], vec![1, 2, 3], vec![4]])?;
            let x = g.gather(c, idx.clone(), &[4, 5])?;
            let (y, z) = (probe(g, p, 4)?, probe(g, x, 5)?);
            g.add(y, z)
        }
    });
}

#[test]
fn attention_block() {
    check("attention", |s, r| {
        let params = AttentionParams::init(s, "attn", 8, r).unwrap();
        let (q, kv) = (param(s, "q", &[2, 8], r), param(s, "kv", &[9, 8], r));
        move |g: &mut Graph, s: &ParamStore| {
            let (q, kv) = (g.param(s, q)?, g.param(s, kv)?);
            let out = grouped_cross_attention(g, s, &params, q, kv, 2, 3)?;
            probe(g, out.out, 6)
        }
    });
}

#[test]
fn focal_and_smooth_l1() {
    check("losses", |s, r| {
        let (z, p) = (param(s, "z", &[12], r), param(s, "p", &[10], r));
        let t: Vec<f64> = (0..12).map(|_| if r.gen_bool(0.3) { 1.0 } else { 0.0 }).collect();
        let w: Vec<f64> = (0..12).map(|_| if r.gen_bool(0.8) { 1.0 } else { 0.0 }).collect();
        // keep residuals away from the ±β kink where the derivative jumps
        let tgt: Vec<f64> = (0..10).map(|_| r.gen_range(-3.0..3.0)).collect();
        let rw: Vec<f64> = (0..10).map(|_| r.gen_range(0.0..1.0)).collect();
        move |g: &mut Graph, s: &ParamStore| {
            let (z, p) = (g.param(s, z)?, g.param(s, p)?);
            let a = g.focal_loss(z, &t, &w, 0.25, 2.0, 3.0)?;
            let b = g.smooth_l1(p, &tgt, &rw, 1.0, 3.0)?;
            g.add(a, b)
        }
    });
}

fn tiny_model(
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
) -> (FusionParams, HeadParams, HeadConfig, BevGrid, asf::fusion::SensorBundle) {
    let channels = [2, 3, 2];
    let grid = BevGrid { x_min: 0.0, y_min: -3.2, cell: 1.6, rows: 4, cols: 4 };
    let fcfg = FusionConfig { c_u: 8, n_p: 2, n_h: 2, n_u: 1, n_n: 1, n_q: 2, ..FusionConfig::desk() };
    let hcfg = HeadConfig { classes: vec![ClassPrior::desk_classes()[0].clone()], hidden: 5, ..HeadConfig::default() };
    let fusion = FusionParams::init(store, fcfg, channels, rng).unwrap();
    let head = HeadParams::init(store, &hcfg, fcfg.fused_channels(), rng).unwrap();
    let bundle = random_bundle(channels, 4, 4, rng);
    (fusion, head, hcfg, grid, bundle)
}

#[test]
fn head_on_random_map() {
    check("head", |s, r| {
        let hcfg = HeadConfig { hidden: 4, ..HeadConfig::default() };
        let head = HeadParams::init(s, &hcfg, 3, r).unwrap();
        let fm = param(s, "fm", &[3, 4, 4], r);
        move |g: &mut Graph, s: &ParamStore| {
            let x = g.param(s, fm)?;
            let out = head_forward(g, s, &head, x)?;
            let (a, b) = (probe(g, out.logits, 7)?, probe(g, out.deltas, 8)?);
            g.add(a, b)
        }
    });
}

#[test]
fn full_fusion_with_combination_loss() {
    check("asf+scl", |s, r| {
        let (fusion, head, hcfg, grid, bundle) = tiny_model(s, r);
        let x = r.gen_range(1.0..5.0);
        let gts = [GtBox { bbox: Box3d::new(x, 0.5, 0.8, 4.4, 1.9, 1.6, r.gen_range(-0.3..0.3)), class: 0 }];
        let targets = DetectionTargets::build(&hcfg.anchor_grid(grid), &gts, &hcfg);
        let mut mask = AvailabilityMask::all();
        if r.gen_bool(0.3) {
            mask.set(asf::fusion::Sensor::Camera, asf::fusion::Availability::Absent);
        }
        move |g: &mut Graph, s: &ParamStore| {
            let model = Model { fusion: &fusion, head: &head, head_config: &hcfg };
            Ok(scl_loss(g, s, &model, &bundle, &mask, &targets, &SensorSet::COMBINATIONS)?.total)
        }
    });
}
