// The gen → train → eval → inspect pipeline on a tiny config, driven
// through the same functions the `asf` binary calls.

use asf::experiment::{cmd_eval, cmd_gen, cmd_inspect, cmd_train, load_run, EvalOptions, ExperimentConfig};
use asf::metrics::IouMode;

/// AP_BEV@0.3 per evaluated condition.
pub fn run_example() -> asf::Result<Vec<(String, Option<f64>)>> {
    let root = std::env::temp_dir().join(format!("asf-e2e-example-{}", std::process::id()));
    let cfg = ExperimentConfig::desk().with_overrides(&[
        "training.train_frames=8".into(),
        "training.eval_frames=4".into(),
        "training.max_steps=3".into(),
        "training.checkpoint_every=2".into(),
    ])?;
    let (data, run, eval) = (root.join("data"), root.join("run"), root.join("eval"));
    cmd_gen(&cfg, &data, true)?;
    cmd_train(&cfg, &data, &run, true)?;
    let model = load_run(&run)?;
    let opts = EvalOptions {
        failures: vec!["radar=absent".into()],
        ..EvalOptions::default()
    };
    let (_, report) = cmd_eval(&model, &data, &eval, &opts, true)?;
    print!("{}", cmd_inspect(&run)?);
    let out: Vec<(String, Option<f64>)> = report
        .specs
        .iter()
        .map(|s| {
            let name = s.spec.name.clone();
            let ap = report.mean_ap(IouMode::Bev, 0.3, &format!("{name}/all"));
            (name, ap)
        })
        .collect();
    for (n, ap) in &out {
        println!("{n:>18}  {}", ap.map_or("skip".to_string(), |v| format!("{v:.4}")));
    }
    let _ = std::fs::remove_dir_all(&root);
    Ok(out)
}

#[allow(dead_code)]
fn main() {
    run_example().expect("pipeline");
}
