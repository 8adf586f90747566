//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use asf::fusion::{AvailabilityMask, FusionParams, Sensor, SensorBundle};
use asf::headloss::{AnchorGrid, AnchorLabel, Box3d, Detection, GtBox};
use asf::numerics::{ParamStore, Tensor};

// ---------------------------------------------------------------- geometry

/// Corners of a box footprint, computed from scratch.
fn corners(b: &Box3d) -> [(f64, f64); 4] {
    let yaw = b.sin_yaw.atan2(b.cos_yaw);
    let (s, c) = yaw.sin_cos();
    let (hx, hy) = (b.xl / 2.0, b.yl / 2.0);
    [(hx, hy), (-hx, hy), (-hx, -hy), (hx, -hy)].map(|(u, v)| (b.x + u * c - v * s, b.y + u * s + v * c))
}

/// `[x0, x1]` covered by the footprint on the horizontal line `y`, if any.
fn scan_interval(b: &Box3d, y: f64) -> Option<(f64, f64)> {
    let p = corners(b);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..4 {
        let (a, c) = (p[k], p[(k + 1) % 4]);
        let (ymin, ymax) = (a.1.min(c.1), a.1.max(c.1));
        if y < ymin || y > ymax || ymin == ymax {
            continue;
        }
        let t = (y - a.1) / (c.1 - a.1);
        let x = a.0 + t * (c.0 - a.0);
        lo = lo.min(x);
        hi = hi.max(x);
    }
    (lo <= hi).then_some((lo, hi))
}

/// Footprint intersection by midpoint scanlines.
pub fn raster_bev_intersection(a: &Box3d, b: &Box3d, lines: usize) -> f64 {
    let ys = |b: &Box3d| {
        let p = corners(b);
        let lo = p.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        let hi = p.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let (a0, a1) = ys(a);
    let (b0, b1) = ys(b);
    let (y0, y1) = (a0.max(b0), a1.min(b1));
    if y0 >= y1 {
        return 0.0;
    }
    let h = (y1 - y0) / lines as f64;
    let mut area = 0.0;
    for k in 0..lines {
        let y = y0 + (k as f64 + 0.5) * h;
        if let (Some(p), Some(q)) = (scan_interval(a, y), scan_interval(b, y)) {
            area += (p.1.min(q.1) - p.0.max(q.0)).max(0.0) * h;
        }
    }
    area
}

pub fn raster_iou_bev(a: &Box3d, b: &Box3d) -> f64 {
    let inter = raster_bev_intersection(a, b, 4000);
    let union = a.xl * a.yl + b.xl * b.yl - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// 3D IoU with the footprint by scanlines and the height by voxel slabs.
pub fn voxel_iou_3d(a: &Box3d, b: &Box3d) -> f64 {
    let inter_bev = raster_bev_intersection(a, b, 4000);
    let (za, zb) = ((a.z - a.zl / 2.0, a.z + a.zl / 2.0), (b.z - b.zl / 2.0, b.z + b.zl / 2.0));
    let (lo, hi) = (za.0.min(zb.0), za.1.max(zb.1));
    let slabs = 4000;
    let dz = (hi - lo) / slabs as f64;
    let mut overlap = 0.0;
    for k in 0..slabs {
        let z = lo + (k as f64 + 0.5) * dz;
        if z >= za.0 && z <= za.1 && z >= zb.0 && z <= zb.1 {
            overlap += dz;
        }
    }
    let inter = inter_bev * overlap;
    let union = a.xl * a.yl * a.zl + b.xl * b.yl * b.zl - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

// ---------------------------------------------------------------- NMS

/// Quadratic NMS: pairwise suppression matrix, then a single pass in
/// priority order.
pub fn nms_oracle(dets: &[Detection], thr: f64, iou: impl Fn(&Box3d, &Box3d) -> f64) -> Vec<usize> {
    let n = dets.len();
    let mut rank: Vec<usize> = (0..n).collect();
    rank.sort_by(|&i, &j| {
        dets[j]
            .score
            .partial_cmp(&dets[i].score)
            .unwrap()
            .then(dets[i].anchor.cmp(&dets[j].anchor))
    });
    let mut suppresses = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            suppresses[i][j] = i != j && dets[i].class == dets[j].class && iou(&dets[i].bbox, &dets[j].bbox) > thr;
        }
    }
    let mut kept: Vec<usize> = Vec::new();
    for &i in &rank {
        if !kept.iter().any(|&k| suppresses[k][i]) {
            kept.push(i);
        }
    }
    kept
}

// ---------------------------------------------------------------- AP

/// Reference AP: explicit IoU matrix, explicit PR curve, envelope taken as
/// the max precision at any recall at or beyond each recall step.
pub fn ap_oracle(
    frames: &[(Vec<Detection>, Vec<GtBox>)],
    class: usize,
    thr: f64,
    iou: impl Fn(&Box3d, &Box3d) -> f64,
) -> Option<f64> {
    let mut dets: Vec<(usize, Detection)> = Vec::new();
    for (fi, (d, _)) in frames.iter().enumerate() {
        for x in d.iter().filter(|x| x.class == class) {
            dets.push((fi, *x));
        }
    }
    let total_gt: usize = frames.iter().map(|(_, g)| g.iter().filter(|x| x.class == class).count()).sum();
    if dets.is_empty() && total_gt == 0 {
        return None;
    }
    dets.sort_by(|a, b| {
        b.1.score
            .partial_cmp(&a.1.score)
            .unwrap()
            .then(a.0.cmp(&b.0))
            .then(a.1.anchor.cmp(&b.1.anchor))
    });
    let mut taken: Vec<Vec<bool>> = frames.iter().map(|(_, g)| vec![false; g.len()]).collect();
    let mut tps = Vec::new();
    for (fi, d) in &dets {
        let gts = &frames[*fi].1;
        let ious: Vec<f64> = gts
            .iter()
            .map(|g| if g.class == class { iou(&d.bbox, &g.bbox) } else { -1.0 })
            .collect();
        let mut pick = None;
        let mut best = f64::NEG_INFINITY;
        for (gi, &v) in ious.iter().enumerate() {
            if !taken[*fi][gi] && v >= thr && v > best {
                best = v;
                pick = Some(gi);
            }
        }
        if let Some(gi) = pick {
            taken[*fi][gi] = true;
        }
        tps.push(pick.is_some());
    }
    if total_gt == 0 {
        return Some(0.0);
    }
    let mut pr = Vec::new();
    let mut tp = 0.0;
    for (k, t) in tps.iter().enumerate() {
        if *t {
            tp += 1.0;
        }
        pr.push((tp / total_gt as f64, tp / (k + 1) as f64));
    }
    let mut ap = 0.0;
    let mut prev = 0.0;
    for k in 0..pr.len() {
        let r = pr[k].0;
        if r > prev {
            let envelope = pr[k..].iter().map(|x| x.1).fold(0.0, f64::max);
            ap += (r - prev) * envelope;
            prev = r;
        }
    }
    Some(ap)
}

// ---------------------------------------------------------------- matching

/// Exhaustive anchor labelling: every anchor against every ground truth.
pub fn match_oracle(anchors: &AnchorGrid, gts: &[GtBox], pos: f64, neg: f64, iou: impl Fn(&Box3d, &Box3d) -> f64) -> Vec<AnchorLabel> {
    let n = anchors.len();
    let m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            gts.iter()
                .map(|g| if anchors.class_of(i) == g.class { iou(anchors.anchor(i), &g.bbox) } else { 0.0 })
                .collect()
        })
        .collect();
    let mut labels = vec![AnchorLabel::Negative; n];
    for i in 0..n {
        let mut best = (0.0, None);
        for (j, &v) in m[i].iter().enumerate() {
            if v > best.0 {
                best = (v, Some(j));
            }
        }
        if let (v, Some(j)) = best {
            labels[i] = if v >= pos {
                AnchorLabel::Positive(j)
            } else if v >= neg {
                AnchorLabel::Ignore
            } else {
                AnchorLabel::Negative
            };
        }
    }
    for j in 0..gts.len() {
        let mut best = (0.0, None);
        for (i, row) in m.iter().enumerate() {
            if row[j] > best.0 {
                best = (row[j], Some(i));
            }
        }
        if let (_, Some(i)) = best {
            labels[i] = AnchorLabel::Positive(j);
        }
    }
    labels
}

// ---------------------------------------------------------------- attention

fn erf_gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + 1e-5).sqrt();
    x.iter().enumerate().map(|(i, v)| (v - mean) * inv * gamma[i] + beta[i]).collect()
}

fn affine(x: &[f64], w: &Tensor, b: &Tensor) -> Vec<f64> {
    let (inp, out) = (w.shape()[0], w.shape()[1]);
    assert_eq!(x.len(), inp);
    (0..out)
        .map(|o| b.data()[o] + (0..inp).map(|i| x[i] * w.data()[i * out + o]).sum::<f64>())
        .collect()
}

fn named<'a>(store: &'a ParamStore, name: &str) -> &'a Tensor {
    store.value(store.id(name).unwrap_or_else(|| panic!("no parameter {name}")))
}

fn lin(store: &ParamStore, name: &str, x: &[f64]) -> Vec<f64> {
    affine(x, named(store, &format!("{name}.w")), named(store, &format!("{name}.b")))
}

/// `LN → (Linear → GeLU)^n → LN` by parameter name.
pub fn projection_stack(store: &ParamStore, name: &str, repeats: usize, x: &[f64]) -> Vec<f64> {
    let ln = |tag: &str, v: &[f64]| {
        layer_norm(
            v,
            named(store, &format!("{name}.{tag}.gamma")).data(),
            named(store, &format!("{name}.{tag}.beta")).data(),
        )
    };
    let mut h = ln("ln_in", x);
    for i in 0..repeats {
        h = lin(store, &format!("{name}.proj{i}"), &h).into_iter().map(erf_gelu).collect();
    }
    ln("ln_out", &h)
}

/// Multi-head scaled dot-product attention of one query against `keys`,
/// with the projections named `{name}.q/k/v/o`. Returns the output and the
/// per-head probabilities.
pub fn mha_one_query(store: &ParamStore, name: &str, heads: usize, query: &[f64], keys: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let c = query.len();
    let d = c / heads;
    let q = lin(store, &format!("{name}.q"), query);
    let k: Vec<Vec<f64>> = keys.iter().map(|x| lin(store, &format!("{name}.k"), x)).collect();
    let v: Vec<Vec<f64>> = keys.iter().map(|x| lin(store, &format!("{name}.v"), x)).collect();
    let mut mixed = vec![0.0; c];
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let s: Vec<f64> = k
            .iter()
            .map(|kr| (0..d).map(|j| q[h * d + j] * kr[h * d + j]).sum::<f64>() / (d as f64).sqrt())
            .collect();
        let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = s.iter().map(|x| (x - m).exp()).collect();
        let z: f64 = e.iter().sum();
        let p: Vec<f64> = e.iter().map(|x| x / z).collect();
        for (ki, pk) in p.iter().enumerate() {
            for j in 0..d {
                mixed[h * d + j] += pk * v[ki][h * d + j];
            }
        }
        probs.push(p);
    }
    (lin(store, &format!("{name}.o"), &mixed), probs)
}

/// Whole fusion stage written patch by patch with plain loops. Returns the
/// fused `n_p·C_q × H × W` map and the `[bank][patch][sensor]` mass.
pub fn monolithic_asf(
    store: &ParamStore,
    params: &FusionParams,
    bundle: &SensorBundle,
    mask: &AvailabilityMask,
) -> (Vec<f64>, Vec<[f64; 3]>) {
    let cfg = params.config;
    let (ph, pw) = (cfg.patch_h, cfg.patch_w);
    let any = bundle.iter().next().unwrap();
    let (h, w) = (any.height(), any.width());
    let (gr, gc) = (h / ph, w / pw);
    let cpp = ph * pw;
    let c_q = cfg.c_u / cpp;
    let present: Vec<Sensor> = Sensor::ALL.into_iter().filter(|s| mask.get(*s).is_present()).collect();
    let mut fused = vec![0.0; cfg.n_p * c_q * h * w];
    let mut mass = vec![[0.0; 3]; cfg.n_p * gr * gc];
    for pr in 0..gr {
        for pc in 0..gc {
            let p = pr * gc + pc;
            let keys: Vec<Vec<f64>> = present
                .iter()
                .map(|s| {
                    let fm = bundle.get(*s).unwrap();
                    let mut v = Vec::new();
                    for ch in 0..fm.channels() {
                        for dr in 0..ph {
                            for dc in 0..pw {
                                v.push(fm.data.data()[(ch * h + pr * ph + dr) * w + pc * pw + dc]);
                            }
                        }
                    }
                    projection_stack(store, &format!("ucp.{}", s.name()), cfg.n_u, &v)
                })
                .collect();
            for b in 0..cfg.n_p {
                let bank = named(store, &format!("casap.query{b}"));
                let mut acc = vec![0.0; cfg.c_u];
                for q in 0..cfg.n_q {
                    let query = &bank.data()[q * cfg.c_u..(q + 1) * cfg.c_u];
                    let (o, probs) = mha_one_query(store, "casap.attn", cfg.n_h, query, &keys);
                    for (a, x) in acc.iter_mut().zip(&o) {
                        *a += x / cfg.n_q as f64;
                    }
                    for head in &probs {
                        for (ki, s) in present.iter().enumerate() {
                            mass[b * gr * gc + p][s.index()] += head[ki] / (cfg.n_h * cfg.n_q) as f64;
                        }
                    }
                }
                let y = projection_stack(store, "pn", cfg.n_n, &acc);
                for cq in 0..c_q {
                    for dr in 0..ph {
                        for dc in 0..pw {
                            let (r, c) = (pr * ph + dr, pc * pw + dc);
                            fused[((b * c_q + cq) * h + r) * w + c] = y[cq * cpp + dr * pw + dc];
                        }
                    }
                }
            }
        }
    }
    (fused, mass)
}

// ---------------------------------------------------------------- random cases

use rand::Rng;

pub fn random_box<R: Rng>(rng: &mut R, spread: f64) -> Box3d {
    Box3d::new(
        rng.gen_range(-spread..spread),
        rng.gen_range(-spread..spread),
        rng.gen_range(0.0..2.0),
        rng.gen_range(0.5..6.0),
        rng.gen_range(0.5..3.0),
        rng.gen_range(0.5..3.0),
        rng.gen_range(-3.2..3.2),
    )
}
