// A short training run with the sensor-combination loss on a small desk
// dataset. Prints the per-step summed loss.

use asf::experiment::{train, AsfModel, ExperimentConfig, TrainReport};
use asf::scenes::make_dataset;

pub fn run_example() -> asf::Result<TrainReport> {
    let mut cfg = ExperimentConfig::desk();
    cfg.training.max_steps = 12;
    cfg.training.batch = 2;
    let data = make_dataset(&cfg.scenes, 24, cfg.seed, cfg.precision)?;
    let mut model = AsfModel::init(&cfg)?;
    let report = train(&mut model, &data.frames, None)?;
    for step in 1..=report.steps {
        let total: f64 = report.losses.iter().filter(|r| r.step == step).map(|r| r.total).sum();
        println!("step {step:3}  loss {total:.4}");
    }
    println!("{:.1}s", report.seconds);
    Ok(report)
}

#[allow(dead_code)]
fn main() {
    run_example().expect("training");
}
