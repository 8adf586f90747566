use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::eval::{evaluate, export_features, EvalReport, EvalSpec};
use super::model::AsfModel;
use super::train::{train, TrainReport};
use crate::baselines::{run_bench, write_bench_csv, BenchPoint, BenchRow, BenchSettings};
use crate::error::{AsfError, Result};
use crate::metrics::{write_ap_csv, write_feature_export, IouMode};
use crate::numerics::checkpoint::read_records;
use crate::scenes::{config_hash, make_dataset, mix_seed, Dataset, FailureSpec};

pub const RUN_MANIFEST: &str = "run_manifest.toml";
pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Provenance of one command's output directory. `files` lists every file
/// under the directory except the manifest itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub config_hash: String,
    pub code_version: String,
    pub threads: usize,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let p = dir.join(RUN_MANIFEST);
        let text = fs::read_to_string(&p).map_err(|e| AsfError::io(&p, e))?;
        toml::from_str(&text).map_err(|e| AsfError::format(&p, e.to_string()))
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Relative paths of all files below `dir`, sorted.
pub fn list_files(dir: &Path) -> Result<Vec<String>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
        for e in fs::read_dir(dir).map_err(|e| AsfError::io(dir, e))? {
            let p = e.map_err(|e| AsfError::io(dir, e))?.path();
            if p.is_dir() {
                walk(root, &p, out)?;
            } else {
                let rel = p.strip_prefix(root).expect("below root");
                out.push(rel.to_string_lossy().replace('\\', "/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}

fn finish_run(dir: &Path, command: &str, hash: &str, started: u64) -> Result<RunManifest> {
    let mut files = Vec::new();
    for rel in list_files(dir)? {
        if rel == RUN_MANIFEST {
            continue;
        }
        let p = dir.join(&rel);
        let bytes = fs::read(&p).map_err(|e| AsfError::io(&p, e))?;
        files.push(FileEntry {
            path: rel,
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
    }
    let m = RunManifest {
        run_id: format!("{command}-{}", &hash[..12.min(hash.len())]),
        command: command.into(),
        config_hash: hash.into(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        threads: 1,
        started_unix: started,
        finished_unix: now(),
        files,
    };
    let p = dir.join(RUN_MANIFEST);
    fs::write(&p, toml::to_string(&m).expect("manifest serializes")).map_err(|e| AsfError::io(&p, e))?;
    Ok(m)
}

/// Creates `dir`; an existing non-empty directory is an error unless
/// `force`, in which case it is cleared first.
pub fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir).map_err(|e| AsfError::io(dir, e))?.next().is_some();
        if non_empty && !force {
            return Err(AsfError::Config(format!(
                "output directory {} exists and is not empty (use --force to overwrite)",
                dir.display()
            )));
        }
        if non_empty {
            fs::remove_dir_all(dir).map_err(|e| AsfError::io(dir, e))?;
        }
    }
    fs::create_dir_all(dir).map_err(|e| AsfError::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| AsfError::io(path, e))
}

/// Seed of the evaluation split of a config seed; kept below 2^63 so it
/// fits a TOML integer.
pub fn eval_split_seed(seed: u64) -> u64 {
    mix_seed(seed, 0xe7a1) >> 1
}

/// Generates `train/` and `eval/` datasets plus the resolved config.
pub fn cmd_gen(config: &ExperimentConfig, out_dir: &Path, force: bool) -> Result<RunManifest> {
    config.validate()?;
    let started = now();
    prepare_out_dir(out_dir, force)?;
    write_file(&out_dir.join(CONFIG_FILE), &config.to_toml())?;
    let t = &config.training;
    make_dataset(&config.scenes, t.train_frames, config.seed, config.precision)?.write(&out_dir.join("train"))?;
    make_dataset(&config.scenes, t.eval_frames, eval_split_seed(config.seed), config.precision)?
        .write(&out_dir.join("eval"))?;
    finish_run(out_dir, "gen", &config.hash(), started)
}

/// Loads one split of a generated dataset and checks it was produced by
/// the same scene settings as `config`.
pub fn load_split(config: &ExperimentConfig, data_dir: &Path, split: &str) -> Result<Dataset> {
    let d = Dataset::load(&data_dir.join(split))?;
    if d.manifest.scenes != config.scenes || d.manifest.precision != config.precision {
        return Err(AsfError::Incompatible(format!(
            "dataset {} was generated with different scene settings or precision",
            data_dir.join(split).display()
        )));
    }
    Ok(d)
}

/// Trains on `data_dir/train` and writes the loss log and checkpoints.
pub fn cmd_train(
    config: &ExperimentConfig,
    data_dir: &Path,
    out_dir: &Path,
    force: bool,
) -> Result<(RunManifest, TrainReport)> {
    config.validate()?;
    let data = load_split(config, data_dir, "train")?;
    let started = now();
    prepare_out_dir(out_dir, force)?;
    write_file(&out_dir.join(CONFIG_FILE), &config.to_toml())?;
    let mut model = AsfModel::init(config)?;
    let report = train(&mut model, &data.frames, Some(out_dir))?;
    report.write_loss_csv(&out_dir.join("loss.csv"), &config.hash())?;
    Ok((finish_run(out_dir, "train", &config.hash(), started)?, report))
}

/// Loads the config and final checkpoint of a training run directory.
pub fn load_run(run_dir: &Path) -> Result<AsfModel> {
    let config = ExperimentConfig::load(&run_dir.join(CONFIG_FILE))?;
    AsfModel::load(&config, &run_dir.join(CHECKPOINT_FILE))
}

/// Options of [`cmd_eval`].
#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    /// Sensor subsets to evaluate; empty means the standard seven plus the
    /// damaged-camera and damaged-LiDAR conditions.
    pub combos: Vec<crate::fusion::SensorSet>,
    /// Extra `sensor=failure` conditions, each evaluated on top of the
    /// standard nine.
    pub failures: Vec<String>,
    /// Also write per-object features for this many frames.
    pub export_frames: usize,
}

/// Evaluates a model on `data_dir/eval` under the standard conditions.
pub fn cmd_eval(
    model: &AsfModel,
    data_dir: &Path,
    out_dir: &Path,
    opts: &EvalOptions,
    force: bool,
) -> Result<(RunManifest, EvalReport)> {
    let config = &model.config;
    let data = load_split(config, data_dir, "eval")?;
    let mut specs = if opts.combos.is_empty() {
        EvalSpec::standard()
    } else {
        opts.combos.iter().map(|c| EvalSpec::combo(*c)).collect()
    };
    for f in &opts.failures {
        let mut spec = FailureSpec::none();
        for part in f.split(';') {
            spec.apply_arg(part)?;
        }
        specs.push(EvalSpec::failure(format!("fail:{spec}"), spec));
    }
    let started = now();
    prepare_out_dir(out_dir, force)?;
    let hash = config.hash();
    let report = evaluate(model, &data.frames, &specs)?;
    let mut buf = Vec::new();
    write_ap_csv(&report.ap, &hash, &mut buf).map_err(|e| AsfError::io(out_dir, e))?;
    fs::write(out_dir.join("ap.csv"), &buf).map_err(|e| AsfError::io(out_dir, e))?;

    let mut sam = format!("# config_hash={hash}\nspec,frame,patch_row,patch_col,bank,sensor,mass\n");
    for s in &report.specs {
        for (id, m) in s.frame_ids.iter().zip(&s.sams) {
            let mut rows = Vec::new();
            m.write_csv_rows(*id, &mut rows).map_err(|e| AsfError::io(out_dir, e))?;
            for line in String::from_utf8_lossy(&rows).lines() {
                let _ = writeln!(sam, "{},{line}", s.spec.name);
            }
        }
    }
    write_file(&out_dir.join("sam.csv"), &sam)?;
    for (table, name) in [(&report.by_weather, "attn_ratio_weather.csv"), (&report.by_distance, "attn_ratio_distance.csv")] {
        let mut buf = Vec::new();
        table.write_csv(&hash, &mut buf).map_err(|e| AsfError::io(out_dir, e))?;
        fs::write(out_dir.join(name), &buf).map_err(|e| AsfError::io(out_dir, e))?;
    }
    let mut notes = report.notes.join("\n");
    notes.push('\n');
    write_file(&out_dir.join("notes.txt"), &notes)?;
    if opts.export_frames > 0 {
        let mut records = Vec::new();
        for f in data.frames.iter().take(opts.export_frames) {
            records.extend(export_features(model, f, &f.mask())?);
        }
        write_feature_export(&out_dir.join("features"), &records, &hash, config.precision)?;
    }
    Ok((finish_run(out_dir, "eval", &hash, started)?, report))
}

#[derive(Serialize)]
struct BenchHash<'a> {
    settings: &'a BenchSettings,
    grid: &'a [BenchPoint],
}

/// Runs the complexity benchmark and writes `bench.csv`.
pub fn cmd_bench(
    grid: &[BenchPoint],
    settings: &BenchSettings,
    out_dir: &Path,
    force: bool,
) -> Result<(RunManifest, Vec<BenchRow>)> {
    let started = now();
    let rows = run_bench(grid, settings)?;
    prepare_out_dir(out_dir, force)?;
    let hash = config_hash(&BenchHash { settings, grid });
    let mut buf = Vec::new();
    write_bench_csv(&rows, &hash, &mut buf).map_err(|e| AsfError::io(out_dir, e))?;
    fs::write(out_dir.join("bench.csv"), &buf).map_err(|e| AsfError::io(out_dir, e))?;
    Ok((finish_run(out_dir, "bench", &hash, started)?, rows))
}

/// One ablation axis, e.g. `P=2,4,5` or `SCL=on,off`.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationAxis {
    pub name: String,
    pub values: Vec<String>,
}

pub const ABLATION_AXES: [&str; 5] = ["P", "C_u", "n_p", "n_h", "SCL"];

impl std::str::FromStr for AblationAxis {
    type Err = AsfError;

    fn from_str(s: &str) -> Result<Self> {
        let (name, vals) = s
            .split_once('=')
            .ok_or_else(|| AsfError::Config(format!("axis '{s}' is not NAME=v1,v2")))?;
        if !ABLATION_AXES.contains(&name) {
            return Err(AsfError::Config(format!("unknown axis '{name}' (P, C_u, n_p, n_h, SCL)")));
        }
        let values: Vec<String> = vals.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(AsfError::Config(format!("axis '{name}' has no values")));
        }
        Ok(Self {
            name: name.into(),
            values,
        })
    }
}

fn apply_axis(c: &mut ExperimentConfig, name: &str, value: &str) -> Result<()> {
    let num = || {
        value
            .parse::<usize>()
            .map_err(|_| AsfError::Config(format!("axis {name}: '{value}' is not a positive integer")))
    };
    match name {
        "P" => {
            let p = num()?;
            c.fusion.patch_h = p;
            c.fusion.patch_w = p;
        }
        "C_u" => c.fusion.c_u = num()?,
        "n_p" => c.fusion.n_p = num()?,
        "n_h" => c.fusion.n_h = num()?,
        "SCL" => {
            c.training.scl = match value {
                "on" | "true" => true,
                "off" | "false" => false,
                _ => return Err(AsfError::Config(format!("axis SCL: '{value}' is not on/off"))),
            }
        }
        _ => return Err(AsfError::Config(format!("unknown axis '{name}'"))),
    }
    Ok(())
}

/// Result of one ablation cell.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    /// `(axis, value)` in axis order.
    pub setting: Vec<(String, String)>,
    /// `None` when the cell was skipped.
    pub skip_reason: Option<String>,
    /// Per seed: class-mean AP of the all-sensor condition at
    /// BEV 0.3, 3D 0.3, BEV 0.5, 3D 0.5.
    pub per_seed: Vec<[f64; 4]>,
}

impl AblationRow {
    /// Mean and sample standard deviation per column.
    pub fn stats(&self) -> [(f64, f64); 4] {
        let n = self.per_seed.len() as f64;
        let mut out = [(0.0, 0.0); 4];
        for (k, o) in out.iter_mut().enumerate() {
            let mean = self.per_seed.iter().map(|r| r[k]).sum::<f64>() / n;
            let var = if self.per_seed.len() > 1 {
                self.per_seed.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            *o = (mean, var.sqrt());
        }
        out
    }
}

pub const ABLATION_METRICS: [&str; 4] = ["ap_bev_0.3", "ap_3d_0.3", "ap_bev_0.5", "ap_3d_0.5"];

/// Trains and evaluates every cell of the grid spanned by `axes` for
/// `seeds` consecutive seeds. Infeasible cells are kept as skip rows.
pub fn run_ablation(
    base: &ExperimentConfig,
    train_data: &Dataset,
    eval_data: &Dataset,
    axes: &[AblationAxis],
    seeds: usize,
) -> Result<Vec<AblationRow>> {
    if seeds == 0 {
        return Err(AsfError::Config("ablation needs at least one seed".into()));
    }
    let mut cells: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for a in axes {
        cells = cells
            .into_iter()
            .flat_map(|c| {
                a.values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push((a.name.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    let spec = [EvalSpec::combo(crate::fusion::SensorSet::FULL)];
    let mut rows = Vec::with_capacity(cells.len());
    for setting in cells {
        let mut cfg = base.clone();
        for (n, v) in &setting {
            apply_axis(&mut cfg, n, v)?;
        }
        if let Err(e) = cfg.validate() {
            match e {
                AsfError::Config(msg) if msg.contains("divisibility") => {
                    rows.push(AblationRow {
                        setting,
                        skip_reason: Some(msg),
                        per_seed: Vec::new(),
                    });
                    continue;
                }
                other => return Err(other),
            }
        }
        let mut per_seed = Vec::with_capacity(seeds);
        for s in 0..seeds {
            cfg.seed = base.seed + s as u64;
            let mut model = AsfModel::init(&cfg)?;
            train(&mut model, &train_data.frames, None)?;
            let rep = evaluate(&model, &eval_data.frames, &spec)?;
            let cond = format!("{}/all", spec[0].name);
            let get = |m, t| rep.mean_ap(m, t, &cond).unwrap_or(0.0);
            per_seed.push([
                get(IouMode::Bev, 0.3),
                get(IouMode::ThreeD, 0.3),
                get(IouMode::Bev, 0.5),
                get(IouMode::ThreeD, 0.5),
            ]);
        }
        rows.push(AblationRow {
            setting,
            skip_reason: None,
            per_seed,
        });
    }
    Ok(rows)
}

/// CSV with one row per cell; metrics print as `mean±std`.
pub fn ablation_csv(axes: &[AblationAxis], rows: &[AblationRow], seeds: usize, hash: &str) -> String {
    let mut s = format!("# config_hash={hash} seeds={seeds} condition=CLR/all ap=class-mean\n");
    let names: Vec<&str> = axes.iter().map(|a| a.name.as_str()).collect();
    let _ = writeln!(s, "{},status,reason,{}", names.join(","), ABLATION_METRICS.join(","));
    for r in rows {
        let vals: Vec<&str> = r.setting.iter().map(|(_, v)| v.as_str()).collect();
        match &r.skip_reason {
            Some(why) => {
                let _ = writeln!(s, "{},skip,{},,,,", vals.join(","), why.replace(',', ";"));
            }
            None => {
                let cols: Vec<String> = r.stats().iter().map(|(m, d)| format!("{m:.6}±{d:.6}")).collect();
                let _ = writeln!(s, "{},ok,,{}", vals.join(","), cols.join(","));
            }
        }
    }
    s
}

/// Runs the ablation grid over the dataset at `data_dir` and writes
/// `ablation.csv`.
pub fn cmd_ablate(
    base: &ExperimentConfig,
    data_dir: &Path,
    axes: &[AblationAxis],
    seeds: usize,
    out_dir: &Path,
    force: bool,
) -> Result<(RunManifest, Vec<AblationRow>)> {
    base.validate()?;
    let train_data = load_split(base, data_dir, "train")?;
    let eval_data = load_split(base, data_dir, "eval")?;
    let started = now();
    let rows = run_ablation(base, &train_data, &eval_data, axes, seeds)?;
    prepare_out_dir(out_dir, force)?;
    let hash = base.hash();
    write_file(&out_dir.join(CONFIG_FILE), &base.to_toml())?;
    write_file(&out_dir.join("ablation.csv"), &ablation_csv(axes, &rows, seeds, &hash))?;
    Ok((finish_run(out_dir, "ablate", &hash, started)?, rows))
}

/// Human-readable summary of a run directory, dataset split or record file.
pub fn cmd_inspect(path: &Path) -> Result<String> {
    let mut s = String::new();
    if path.is_file() {
        let (precision, records) = read_records(path)?;
        let _ = writeln!(s, "{}: {} records, {precision:?} scalars", path.display(), records.len());
        for (name, t) in records {
            let _ = writeln!(s, "  {name} {:?}", t.shape());
        }
        return Ok(s);
    }
    if path.join("manifest").is_file() {
        let d = Dataset::load(path)?;
        let m = &d.manifest;
        let _ = writeln!(s, "dataset {}: {} frames, seed {}, {:?}", path.display(), m.frames, m.seed, m.precision);
        let _ = writeln!(s, "config_hash {}", m.config_hash);
        let objects: usize = d.frames.iter().map(|f| f.scene.objects.len()).sum();
        let _ = writeln!(s, "objects {objects}");
        return Ok(s);
    }
    let m = RunManifest::load(path)?;
    let _ = writeln!(s, "run {} ({}), code {}", m.run_id, m.command, m.code_version);
    let _ = writeln!(s, "config_hash {}", m.config_hash);
    for f in &m.files {
        let _ = writeln!(s, "  {} {} bytes sha256={}", f.path, f.bytes, &f.sha256[..16]);
    }
    for split in ["train", "eval"] {
        if path.join(split).join("manifest").is_file() {
            s.push_str(&cmd_inspect(&path.join(split))?);
        }
    }
    Ok(s)
}

/// Path helper for callers that take either a run directory or a
/// checkpoint file.
pub fn checkpoint_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(CHECKPOINT_FILE)
    } else {
        p.to_path_buf()
    }
}
