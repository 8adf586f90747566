// Pool per-object features from the raw maps, the canonical projections
// and the cross-sensor attention output, then save a checkpoint and load
// it back.

use asf::experiment::{export_features, AsfModel, ExperimentConfig};
use asf::metrics::write_feature_export;
use asf::scenes::make_frame;

/// Records per stage, in first-seen order.
pub fn run_example() -> asf::Result<Vec<(String, usize)>> {
    let cfg = ExperimentConfig::desk();
    let model = AsfModel::init(&cfg)?;
    let frame = make_frame(&cfg.scenes, 3, 0, cfg.precision)?;
    let records = export_features(&model, &frame, &frame.mask())?;

    let dir = std::env::temp_dir().join(format!("asf-export-example-{}", std::process::id()));
    write_feature_export(&dir.join("features"), &records, &cfg.hash(), cfg.precision)?;
    model.save(&dir.join("checkpoint.bin"))?;
    let back = AsfModel::load(&cfg, &dir.join("checkpoint.bin"))?;
    assert_eq!(back.store.named_values(), model.store.named_values());
    let _ = std::fs::remove_dir_all(&dir);

    let mut counts: Vec<(String, usize)> = Vec::new();
    for (tag, _) in &records {
        let key = format!("{}/{}", tag.stage, tag.sensor);
        match counts.iter_mut().find(|(k, _)| *k == key) {
            Some((_, n)) => *n += 1,
            None => counts.push((key, 1)),
        }
    }
    for (k, n) in &counts {
        println!("{k:<18} {n} objects");
    }
    Ok(counts)
}

#[allow(dead_code)]
fn main() {
    run_example().expect("export");
}
