use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distributions::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::SceneConfig;
use super::failure::FailureSpec;
use super::scene::{generate_scene, mix_seed, Scene};
use super::sensor::render_sensor_fm;
use super::weather::Weather;
use crate::error::{AsfError, Result};
use crate::fusion::{AvailabilityMask, FeatureMap, Sensor, SensorBundle};
use crate::headloss::{Box3d, GtBox};
use crate::numerics::checkpoint::{read_records, write_records, FORMAT_VERSION};
use crate::numerics::{Precision, Tensor};

/// Hex SHA-256 of the TOML rendering of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let text = toml::to_string(value).expect("config serializes to TOML");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// One rendered frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub id: usize,
    pub seed: u64,
    pub scene: Scene,
    pub failure: FailureSpec,
    /// All three maps; absent sensors are all zeros.
    pub bundle: SensorBundle,
}

impl Frame {
    pub fn mask(&self) -> AvailabilityMask {
        self.failure.mask()
    }

    pub fn weather(&self) -> Weather {
        self.scene.weather
    }
}

/// Renders the scene under `failure`, drawing sensor noise from `rng`.
pub fn render_frame<R: Rng + ?Sized>(
    cfg: &SceneConfig,
    scene: &Scene,
    failure: &FailureSpec,
    precision: Precision,
    rng: &mut R,
) -> Result<SensorBundle> {
    let mut bundle = SensorBundle::new();
    for s in Sensor::ALL {
        let mut fm = render_sensor_fm(scene, s, cfg.model(s), &failure.get(s), rng)?;
        for v in fm.data.data_mut() {
            *v = precision.round(*v);
        }
        bundle.insert(fm)?;
    }
    Ok(bundle)
}

/// Frame `id` of the dataset seeded with `seed`; independent of every other
/// frame.
pub fn make_frame(cfg: &SceneConfig, seed: u64, id: usize, precision: Precision) -> Result<Frame> {
    let frame_seed = mix_seed(seed, id as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(frame_seed);
    let weathers: Vec<(Weather, f64)> = cfg.weather_mix.iter().map(|(w, p)| (*w, *p)).collect();
    let wi = WeightedIndex::new(weathers.iter().map(|w| w.1))
        .map_err(|e| AsfError::Config(format!("weather_mix: {e}")))?;
    let weather = weathers[rng.sample(&wi)].0;
    let failures = cfg.failures()?;
    let fi = WeightedIndex::new(failures.iter().map(|f| f.1))
        .map_err(|e| AsfError::Config(format!("failure_mix: {e}")))?;
    let failure = failures[rng.sample(&fi)].0;
    let scene = generate_scene(
        rng.gen(),
        weather,
        (cfg.min_objects, cfg.max_objects),
        cfg.grid,
        &cfg.classes,
    );
    let bundle = render_frame(cfg, &scene, &failure, precision, &mut rng)?;
    Ok(Frame {
        id,
        seed: frame_seed,
        scene,
        failure,
        bundle,
    })
}

/// Header of a dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub frames: usize,
    pub seed: u64,
    pub precision: Precision,
    pub config_hash: String,
    pub scenes: SceneConfig,
}

#[derive(Serialize)]
struct HashInput<'a> {
    seed: u64,
    precision: Precision,
    scenes: &'a SceneConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub frames: Vec<Frame>,
}

pub const LABELS_HEADER: &str = "frame,class,x,y,z,xl,yl,zl,cos,sin,weather,failures";
pub const FRAMES_HEADER: &str = "frame,seed,scene_seed,weather,failures,objects,shortfall";

/// Generates `n_frames` frames in memory.
pub fn make_dataset(cfg: &SceneConfig, n_frames: usize, seed: u64, precision: Precision) -> Result<Dataset> {
    cfg.validate()?;
    if seed > i64::MAX as u64 {
        return Err(AsfError::Config("dataset seed must be below 2^63".into()));
    }
    let frames = (0..n_frames)
        .map(|id| make_frame(cfg, seed, id, precision))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        manifest: DatasetManifest {
            format_version: FORMAT_VERSION,
            frames: n_frames,
            seed,
            precision,
            config_hash: config_hash(&HashInput {
                seed,
                precision,
                scenes: cfg,
            }),
            scenes: cfg.clone(),
        },
        frames,
    })
}

fn frame_file(dir: &Path, id: usize) -> std::path::PathBuf {
    dir.join("frames").join(format!("{id:06}.bin"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| AsfError::io(path, e))
}

impl Dataset {
    pub fn config(&self) -> &SceneConfig {
        &self.manifest.scenes
    }

    /// Writes `manifest`, `labels.csv`, `frames.csv` and `frames/NNNNNN.bin`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("frames")).map_err(|e| AsfError::io(dir, e))?;
        let manifest = toml::to_string(&self.manifest)
            .map_err(|e| AsfError::format(dir.join("manifest"), e.to_string()))?;
        write_text(&dir.join("manifest"), &manifest)?;
        let hash = &self.manifest.config_hash;
        let mut labels = format!("# config_hash={hash}\n{LABELS_HEADER}\n");
        let mut index = format!("# config_hash={hash}\n{FRAMES_HEADER}\n");
        for f in &self.frames {
            let _ = writeln!(
                index,
                "{},{},{},{},{},{},{}",
                f.id,
                f.seed,
                f.scene.seed,
                f.weather(),
                f.failure,
                f.scene.objects.len(),
                f.scene.shortfall as u8
            );
            for o in &f.scene.objects {
                let b = &o.bbox;
                let _ = writeln!(
                    labels,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    f.id,
                    o.class,
                    b.x,
                    b.y,
                    b.z,
                    b.xl,
                    b.yl,
                    b.zl,
                    b.cos_yaw,
                    b.sin_yaw,
                    f.weather(),
                    f.failure
                );
            }
            let records: Vec<(String, Tensor)> = f
                .bundle
                .iter()
                .map(|fm| (fm.sensor.name().to_string(), fm.data.clone()))
                .collect();
            write_records(&frame_file(dir, f.id), &records, self.manifest.precision)?;
        }
        write_text(&dir.join("labels.csv"), &labels)?;
        write_text(&dir.join("frames.csv"), &index)?;
        Ok(())
    }

    /// Reads a directory written by [`Dataset::write`].
    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join("manifest");
        let text = fs::read_to_string(&mpath).map_err(|e| AsfError::io(&mpath, e))?;
        let manifest: DatasetManifest =
            toml::from_str(&text).map_err(|e| AsfError::format(&mpath, e.to_string()))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(AsfError::format(
                &mpath,
                format!("format version {} (expected {FORMAT_VERSION})", manifest.format_version),
            ));
        }
        let cfg = &manifest.scenes;
        let fpath = dir.join("frames.csv");
        let index = read_csv(&fpath, FRAMES_HEADER)?;
        if index.len() != manifest.frames {
            return Err(AsfError::format(&fpath, format!("{} rows for {} frames", index.len(), manifest.frames)));
        }
        let lpath = dir.join("labels.csv");
        let labels = read_csv(&lpath, LABELS_HEADER)?;
        let mut objects: Vec<Vec<GtBox>> = vec![Vec::new(); manifest.frames];
        for (line, row) in labels {
            let bad = |why: &str| AsfError::format(&lpath, format!("line {line}: {why}"));
            let id: usize = row[0].parse().map_err(|_| bad("frame id"))?;
            let class: usize = row[1].parse().map_err(|_| bad("class"))?;
            let v = row[2..10]
                .iter()
                .map(|t| t.parse::<f64>().map_err(|_| bad("number")))
                .collect::<Result<Vec<_>>>()?;
            let slot = objects.get_mut(id).ok_or_else(|| bad("frame id out of range"))?;
            slot.push(GtBox {
                bbox: Box3d {
                    x: v[0],
                    y: v[1],
                    z: v[2],
                    xl: v[3],
                    yl: v[4],
                    zl: v[5],
                    cos_yaw: v[6],
                    sin_yaw: v[7],
                },
                class,
            });
        }
        let mut frames = Vec::with_capacity(manifest.frames);
        for ((line, row), objs) in index.into_iter().zip(objects) {
            let bad = |why: &str| AsfError::format(&fpath, format!("line {line}: {why}"));
            let id: usize = row[0].parse().map_err(|_| bad("frame id"))?;
            if id != frames.len() {
                return Err(bad("frame ids are not dense 0..n-1"));
            }
            let seed: u64 = row[1].parse().map_err(|_| bad("seed"))?;
            let scene_seed: u64 = row[2].parse().map_err(|_| bad("scene seed"))?;
            let weather: Weather = row[3].parse()?;
            let failure: FailureSpec = row[4].parse()?;
            let shortfall = row[6] == "1";
            let bin = frame_file(dir, id);
            let (_, records) = read_records(&bin)?;
            let mut bundle = SensorBundle::new();
            for (name, t) in records {
                let sensor: Sensor = name.parse()?;
                bundle.insert(FeatureMap::new(sensor, t)?)?;
            }
            if bundle.sensors().len() != 3 {
                return Err(AsfError::format(&bin, "frame must hold all three sensor maps"));
            }
            frames.push(Frame {
                id,
                seed,
                scene: Scene {
                    seed: scene_seed,
                    weather,
                    grid: cfg.grid,
                    objects: objs,
                    shortfall,
                },
                failure,
                bundle,
            });
        }
        Ok(Self { manifest, frames })
    }
}

/// Rows of a CSV with one `#` comment line and the given header, as
/// `(line number, fields)`.
pub fn read_csv(path: &Path, header: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| AsfError::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#'));
    match lines.next() {
        Some((_, h)) if h == header => {}
        other => {
            return Err(AsfError::format(
                path,
                format!("expected header '{header}', found {:?}", other.map(|o| o.1)),
            ))
        }
    }
    let width = header.split(',').count();
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let row: Vec<String> = l.split(',').map(str::to_string).collect();
            if row.len() != width {
                return Err(AsfError::format(path, format!("line {}: {} fields, expected {width}", i + 1, row.len())));
            }
            Ok((i + 1, row))
        })
        .collect()
}
