// Blank the camera's left half and watch attention leave it there.

use asf::fusion::{asf_infer, FusionConfig, FusionParams, Sensor};
use asf::numerics::{ParamStore, Precision};
use asf::scenes::{make_frame, render_frame, FailureSpec, Region, SceneConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mean camera mass over the damaged patches, before and after damage.
pub fn run_example() -> asf::Result<(f64, f64)> {
    let cfg = SceneConfig::default();
    let frame = make_frame(&cfg, 11, 0, Precision::F64)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let params = FusionParams::init(&mut store, FusionConfig::desk(), cfg.channels(), &mut rng)?;

    let damaged = FailureSpec::camera_damaged();
    let mut noise = ChaCha8Rng::seed_from_u64(frame.seed);
    let bundle = render_frame(&cfg, &frame.scene, &damaged, Precision::F64, &mut noise)?;
    let (_, clean) = asf_infer(&store, &params, &frame.bundle, &frame.mask())?;
    let (_, hurt) = asf_infer(&store, &params, &bundle, &damaged.mask())?;

    let (rows, cols) = (clean.grid_rows, clean.grid_cols);
    let in_region: Vec<usize> = (0..rows * cols)
        .filter(|p| Region::LeftHalf.contains(p / cols, p % cols, rows, cols))
        .collect();
    let cam = |sam: &asf::fusion::SensorAttentionMap| {
        in_region.iter().map(|p| sam.patch_mean(*p)[Sensor::Camera.index()]).sum::<f64>() / in_region.len() as f64
    };
    let (before, after) = (cam(&clean), cam(&hurt));
    println!("spec {damaged}");
    println!("camera attention in damaged half: {before:.3} -> {after:.3}");
    Ok((before, after))
}

#[allow(dead_code)]
fn main() {
    run_example().expect("failure demo");
}
