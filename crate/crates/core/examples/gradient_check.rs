// Finite-difference check of the whole fusion + head + combination loss
// on a 4×4 grid.

use asf::fusion::{random_bundle, AvailabilityMask, FusionConfig, FusionParams, SensorSet};
use asf::headloss::{scl_loss, BevGrid, ClassPrior, DetectionTargets, GtBox, HeadConfig, HeadParams, Model};
use asf::headloss::Box3d;
use asf::numerics::gradcheck::{check_gradients, GradReport};
use asf::numerics::ParamStore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> asf::Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let channels = [2, 3, 2];
    let grid = BevGrid { x_min: 0.0, y_min: -3.2, cell: 1.6, rows: 4, cols: 4 };
    let fusion_cfg = FusionConfig { c_u: 8, n_p: 2, n_h: 2, n_u: 1, n_n: 1, ..FusionConfig::desk() };
    let head_cfg = HeadConfig {
        classes: vec![ClassPrior::desk_classes()[0].clone()],
        hidden: 6,
        ..HeadConfig::default()
    };
    let mut store = ParamStore::new();
    let fusion = FusionParams::init(&mut store, fusion_cfg, channels, &mut rng)?;
    let head = HeadParams::init(&mut store, &head_cfg, fusion_cfg.fused_channels(), &mut rng)?;
    let bundle = random_bundle(channels, 4, 4, &mut rng);
    let gts = [GtBox { bbox: Box3d::new(2.4, 0.8, 0.8, 4.4, 1.9, 1.6, 0.1), class: 0 }];
    let targets = DetectionTargets::build(&head_cfg.anchor_grid(grid), &gts, &head_cfg);
    let model = Model { fusion: &fusion, head: &head, head_config: &head_cfg };
    let mask = AvailabilityMask::all();

    let report = check_gradients(&mut store, 1e-5, |g, s| {
        Ok(scl_loss(g, s, &model, &bundle, &mask, &targets, &SensorSet::COMBINATIONS)?.total)
    })?;
    println!("{} scalars, max relative error {:.2e} at {}", report.checked, report.max_rel_err, report.worst);
    Ok(report)
}

#[allow(dead_code)]
fn main() {
    run_example().expect("gradcheck");
}
