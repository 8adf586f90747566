// Channel concatenation needs every sensor; drop one and its fused width
// no longer matches the head. ASF takes the same input without complaint.

use asf::baselines::{dcf_concat_fuse, DcfParams};
use asf::fusion::{asf_infer, random_bundle, AvailabilityMask, FusionConfig, FusionParams, Sensor, SensorSet};
use asf::numerics::ParamStore;
use asf::AsfError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Per proper subset: (code, DCF error text, ASF fused shape).
pub fn run_example() -> asf::Result<Vec<(String, String, Vec<usize>)>> {
    let channels = [6, 8, 4];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let full = random_bundle(channels, 16, 16, &mut rng);
    let dcf = DcfParams::new(channels);
    let mut store = ParamStore::new();
    let params = FusionParams::init(&mut store, FusionConfig::desk(), channels, &mut rng)?;

    let mut out = Vec::new();
    for combo in SensorSet::COMBINATIONS.into_iter().filter(|c| *c != SensorSet::FULL) {
        let mut bundle = full.clone();
        for s in Sensor::ALL {
            if !combo.contains(s) {
                bundle.remove(s);
            }
        }
        let err = match dcf_concat_fuse(&bundle, &dcf) {
            Err(e @ AsfError::FusedWidthMismatch { .. }) => e.to_string(),
            Err(e) => return Err(e),
            Ok(_) => panic!("DCF accepted an incomplete bundle"),
        };
        let (fused, _) = asf_infer(&store, &params, &bundle, &AvailabilityMask::from_set(combo))?;
        println!("{:>3}  DCF: {err}\n     ASF: {:?}", combo.code(), fused.0.shape());
        out.push((combo.code(), err, fused.0.shape().to_vec()));
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() {
    run_example().expect("dcf demo");
}
