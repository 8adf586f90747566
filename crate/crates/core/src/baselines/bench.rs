use std::fmt;
use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::scf::{scf_decode, ScfParams};
use crate::error::{AsfError, Result};
use crate::fusion::{
    assemble_fused_fm, casap_fuse, post_normalize, AvailabilityMask, FusionConfig, FusionParams,
    PatchLayout, Sensor, UnifiedPatchSet,
};
use crate::numerics::{Graph, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Asf,
    Scf,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Asf => "ASF",
            Method::Scf => "SCF",
        })
    }
}

/// Exact counts from the instrumented kernels plus measured wall time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCount {
    pub attention_score_evals: u64,
    pub mlp_mult_adds: u64,
    pub wall_time_ns: u64,
}

/// One benchmark configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BenchPoint {
    /// Patches per sensor, `N_p`.
    pub num_patches: usize,
    /// Patch multiplier for ASF.
    pub n_p: usize,
    pub n_q: usize,
    pub n_obj: usize,
    pub n_td: usize,
}

/// Widths shared by every point of a benchmark run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BenchSettings {
    pub c_u: usize,
    pub n_h: usize,
    pub patch: usize,
    pub num_sensors: usize,
    /// Timed repetitions; the fastest is reported.
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            c_u: 64,
            n_h: 4,
            patch: 2,
            num_sensors: 3,
            repeats: 3,
            seed: 0,
        }
    }
}

/// `N_p ∈ {16, 64, 144} × n_p ∈ {1, 2} × n_td ∈ {1, 6}`, `N_q = 1`, `N_obj = 300`.
pub fn default_grid() -> Vec<BenchPoint> {
    let mut out = Vec::new();
    for num_patches in [16, 64, 144] {
        for n_p in [1, 2] {
            for n_td in [1, 6] {
                out.push(BenchPoint {
                    num_patches,
                    n_p,
                    n_q: 1,
                    n_obj: 300,
                    n_td,
                });
            }
        }
    }
    out
}

/// Closed-form score evaluations: `n_p·N_p·N_q·N_s` for ASF and
/// `n_td·N_obj·N_s·N_p` for SCF.
pub fn expected_score_evals(method: Method, p: &BenchPoint, num_sensors: usize) -> u64 {
    let v = match method {
        Method::Asf => p.n_p * p.num_patches * p.n_q * num_sensors,
        Method::Scf => p.n_td * p.n_obj * num_sensors * p.num_patches,
    };
    v as u64
}

fn grid_for(num_patches: usize) -> (usize, usize) {
    let mut rows = (num_patches as f64).sqrt() as usize;
    while rows > 1 && num_patches % rows != 0 {
        rows -= 1;
    }
    (rows.max(1), num_patches / rows.max(1))
}

/// Runs the instrumented fusion forward of `method` on random unified
/// patches and reports its counts. Both methods start from the same
/// unified patch sets; only the fusion stage itself is measured.
pub fn count_attention_ops(method: Method, point: &BenchPoint, s: &BenchSettings) -> Result<OpCount> {
    if point.num_patches == 0 || s.num_sensors == 0 || s.num_sensors > 3 {
        return Err(AsfError::Config(format!("bench point {point:?} with {} sensors", s.num_sensors)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut store = ParamStore::new();
    let (gr, gc) = grid_for(point.num_patches);
    let layout = PatchLayout::new(gr * s.patch, gc * s.patch, s.patch, s.patch)?;
    let sensors = &Sensor::ALL[..s.num_sensors];
    let inputs: Vec<Tensor> = sensors
        .iter()
        .map(|_| Tensor::randn(&[point.num_patches, s.c_u], 1.0, &mut rng))
        .collect();

    enum Built {
        Asf(FusionParams),
        Scf(ScfParams),
    }
    let built = match method {
        Method::Asf => {
            let cfg = FusionConfig {
                patch_h: s.patch,
                patch_w: s.patch,
                c_u: s.c_u,
                n_p: point.n_p,
                n_h: s.n_h,
                n_q: point.n_q,
                ..FusionConfig::desk()
            };
            cfg.validate(layout.height, layout.width)?;
            Built::Asf(FusionParams::init(&mut store, cfg, [1, 1, 1], &mut rng)?)
        }
        Method::Scf => Built::Scf(ScfParams::init(
            &mut store,
            s.c_u,
            s.n_h,
            point.num_patches,
            point.n_obj,
            point.n_td,
            &mut rng,
        )?),
    };
    let mask = AvailabilityMask::from_set(crate::fusion::SensorSet::from_sensors(sensors));

    let run = || -> Result<Graph> {
        let mut g = Graph::new();
        let mut unified = Vec::with_capacity(sensors.len());
        for (sensor, t) in sensors.iter().zip(&inputs) {
            unified.push(UnifiedPatchSet {
                sensor: *sensor,
                features: g.constant(t.clone())?,
            });
        }
        match &built {
            Built::Asf(p) => {
                let out = casap_fuse(&mut g, &store, p, &unified, &mask, &layout)?;
                let normed = post_normalize(&mut g, &store, p, out.patches)?;
                assemble_fused_fm(&mut g, normed, &layout, p.config.n_p)?;
            }
            Built::Scf(p) => {
                scf_decode(&mut g, &store, p, &unified)?;
            }
        }
        Ok(g)
    };

    let mut best = u64::MAX;
    let mut counter = None;
    for _ in 0..s.repeats.max(1) {
        let t0 = Instant::now();
        let g = run()?;
        let ns = t0.elapsed().as_nanos() as u64;
        best = best.min(ns);
        counter = Some(g.counter());
    }
    let c = counter.expect("at least one repetition");
    Ok(OpCount {
        attention_score_evals: c.attention_score_evals,
        mlp_mult_adds: c.mult_adds,
        wall_time_ns: best,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchRow {
    pub method: Method,
    pub point: BenchPoint,
    pub count: OpCount,
    pub expected_score_evals: u64,
}

/// Both methods at every grid point.
pub fn run_bench(grid: &[BenchPoint], s: &BenchSettings) -> Result<Vec<BenchRow>> {
    if grid.is_empty() {
        return Err(AsfError::Config("benchmark grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(grid.len() * 2);
    for p in grid {
        for method in [Method::Asf, Method::Scf] {
            rows.push(BenchRow {
                method,
                point: *p,
                count: count_attention_ops(method, p, s)?,
                expected_score_evals: expected_score_evals(method, p, s.num_sensors),
            });
        }
    }
    Ok(rows)
}

pub const BENCH_HEADER: &str =
    "method,n_p,N_p,N_q,N_obj,n_td,score_evals,mlp_mult_adds,wall_time_ns,expected_score_evals";

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], config_hash: &str, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "# config_hash={config_hash}")?;
    writeln!(w, "{BENCH_HEADER}")?;
    for r in rows {
        let p = &r.point;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.method,
            p.n_p,
            p.num_patches,
            p.n_q,
            p.n_obj,
            p.n_td,
            r.count.attention_score_evals,
            r.count.mlp_mult_adds,
            r.count.wall_time_ns,
            r.expected_score_evals
        )?;
    }
    Ok(())
}
