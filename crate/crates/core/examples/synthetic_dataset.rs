// Generate a small dataset, write it to disk and read it back.

use asf::numerics::Precision;
use asf::scenes::{make_dataset, Dataset, SceneConfig};

pub fn run_example() -> asf::Result<Dataset> {
    let cfg = SceneConfig::default();
    let data = make_dataset(&cfg, 6, 42, Precision::F32)?;
    let dir = std::env::temp_dir().join(format!("asf-dataset-example-{}", std::process::id()));
    data.write(&dir)?;
    let back = Dataset::load(&dir)?;
    let _ = std::fs::remove_dir_all(&dir);
    assert_eq!(back, data);
    for f in &back.frames {
        println!(
            "frame {} {:<11} failures={:<28} objects={}",
            f.id,
            f.weather().to_string(),
            f.failure.to_string(),
            f.scene.objects.len()
        );
    }
    println!("config_hash {}", back.manifest.config_hash);
    Ok(back)
}

#[allow(dead_code)]
fn main() {
    run_example().expect("dataset");
}
