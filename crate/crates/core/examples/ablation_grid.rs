// A two-axis ablation at toy scale. P=5 does not tile a 16×16 grid, so
// those cells come back as skip rows.

use asf::experiment::{ablation_csv, eval_split_seed, run_ablation, AblationAxis, AblationRow, ExperimentConfig};
use asf::scenes::make_dataset;

pub fn run_example() -> asf::Result<Vec<AblationRow>> {
    let mut cfg = ExperimentConfig::desk();
    cfg.training.max_steps = 2;
    let train = make_dataset(&cfg.scenes, 4, cfg.seed, cfg.precision)?;
    let eval = make_dataset(&cfg.scenes, 3, eval_split_seed(cfg.seed), cfg.precision)?;
    let axes: Vec<AblationAxis> = vec!["P=2,5".parse()?, "SCL=on,off".parse()?];
    let rows = run_ablation(&cfg, &train, &eval, &axes, 2)?;
    print!("{}", ablation_csv(&axes, &rows, 2, &cfg.hash()));
    Ok(rows)
}

#[allow(dead_code)]
fn main() {
    run_example().expect("ablation");
}
