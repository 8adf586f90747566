// Fuse one synthetic frame under every sensor subset. The fused map keeps
// its shape; only the attention mass moves.

use asf::fusion::{asf_infer, AvailabilityMask, FusionConfig, FusionParams, SensorSet};
use asf::numerics::ParamStore;
use asf::scenes::{make_frame, SceneConfig};
use asf::numerics::Precision;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> asf::Result<Vec<(String, Vec<usize>, [f64; 3])>> {
    let scenes = SceneConfig::default();
    let frame = make_frame(&scenes, 7, 0, Precision::F64)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let params = FusionParams::init(&mut store, FusionConfig::desk(), scenes.channels(), &mut rng)?;

    let mut out = Vec::new();
    for combo in SensorSet::COMBINATIONS {
        let (fused, sam) = asf_infer(&store, &params, &frame.bundle, &AvailabilityMask::from_set(combo))?;
        let ratios = sam.sensor_ratios();
        println!(
            "{:>3}  fused {:?}  camera {:.3} lidar {:.3} radar {:.3}",
            combo.code(),
            fused.0.shape(),
            ratios[0],
            ratios[1],
            ratios[2]
        );
        out.push((combo.code(), fused.0.shape().to_vec(), ratios));
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() {
    run_example().expect("fusion");
}
