use std::path::PathBuf;
use std::process::ExitCode;

use asf::baselines::{BenchPoint, BenchSettings};
use asf::experiment::*;
use asf::fusion::SensorSet;
use asf::{AsfError, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "asf", version, about = "Availability-aware sensor fusion experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ConfigArgs {
    /// Named preset (desk, full); ignored when --config is given.
    #[arg(long, default_value = "desk")]
    preset: String,
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set training.epochs=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let base = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::preset(&self.preset)?,
        };
        base.with_overrides(&self.overrides)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate train and eval datasets.
    Gen {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Train a model on a generated dataset.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Evaluate a trained run under sensor subsets and failures.
    Eval {
        /// Training output directory (config.toml + checkpoint.bin).
        #[arg(long)]
        run: PathBuf,
        /// Checkpoint to use instead of the run's final one.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Sensor subset such as `LR`; repeatable. Default: all seven plus C*, L*.
        #[arg(long = "combo")]
        combos: Vec<String>,
        /// Extra failure condition such as `camera=absent`; repeatable.
        #[arg(long = "fail")]
        failures: Vec<String>,
        /// Export per-object features for the first N frames.
        #[arg(long, default_value_t = 0)]
        export: usize,
        #[arg(long)]
        force: bool,
    },
    /// Count attention work of ASF and SCF over a grid.
    Bench {
        #[arg(long)]
        out: PathBuf,
        /// Patches per sensor, comma-separated.
        #[arg(long, value_delimiter = ',', default_values_t = [16, 64, 144])]
        num_patches: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2])]
        n_p: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 6])]
        n_td: Vec<usize>,
        #[arg(long, default_value_t = 300)]
        n_obj: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long)]
        force: bool,
    },
    /// Train and evaluate a grid of settings.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Axis such as `P=2,4,5`; repeatable.
        #[arg(long = "axis", required = true)]
        axes: Vec<String>,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long)]
        force: bool,
    },
    /// Print a run manifest, dataset summary or record file listing.
    Inspect { path: PathBuf },
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Gen { cfg, out, force } => {
            let m = cmd_gen(&cfg.resolve()?, &out, force)?;
            println!("{}: {} files in {}", m.run_id, m.files.len(), out.display());
        }
        Cmd::Train { cfg, data, out, force } => {
            let (m, r) = cmd_train(&cfg.resolve()?, &data, &out, force)?;
            println!("{}: {} steps in {:.1}s, final loss {:.4}", m.run_id, r.steps, r.seconds, r.tail_loss(1));
        }
        Cmd::Eval {
            run,
            checkpoint,
            data,
            out,
            combos,
            failures,
            export,
            force,
        } => {
            let config = ExperimentConfig::load(&run.join(CONFIG_FILE))?;
            let ckpt = checkpoint.unwrap_or_else(|| checkpoint_path(&run));
            let model = AsfModel::load(&config, &ckpt)?;
            let opts = EvalOptions {
                combos: combos.iter().map(|c| c.parse::<SensorSet>()).collect::<Result<_>>()?,
                failures,
                export_frames: export,
            };
            let (m, rep) = cmd_eval(&model, &data, &out, &opts, force)?;
            for s in &rep.specs {
                let cond = format!("{}/all", s.spec.name);
                let ap = rep.mean_ap(asf::metrics::IouMode::Bev, 0.3, &cond);
                println!("{:>8} AP_BEV@0.3 {}", s.spec.name, ap.map_or("skip".into(), |v| format!("{v:.4}")));
            }
            println!("{}: {} files in {}", m.run_id, m.files.len(), out.display());
        }
        Cmd::Bench {
            out,
            num_patches,
            n_p,
            n_td,
            n_obj,
            repeats,
            force,
        } => {
            let mut grid = Vec::new();
            for &np in &num_patches {
                for &p in &n_p {
                    for &t in &n_td {
                        grid.push(BenchPoint {
                            num_patches: np,
                            n_p: p,
                            n_q: 1,
                            n_obj,
                            n_td: t,
                        });
                    }
                }
            }
            let settings = BenchSettings {
                repeats,
                ..BenchSettings::default()
            };
            let (m, rows) = cmd_bench(&grid, &settings, &out, force)?;
            println!("{}: {} rows in {}", m.run_id, rows.len(), out.display());
        }
        Cmd::Ablate {
            cfg,
            data,
            out,
            axes,
            seeds,
            force,
        } => {
            let axes = axes.iter().map(|a| a.parse()).collect::<Result<Vec<AblationAxis>>>()?;
            let (m, rows) = cmd_ablate(&cfg.resolve()?, &data, &axes, seeds, &out, force)?;
            let skipped = rows.iter().filter(|r| r.skip_reason.is_some()).count();
            println!("{}: {} cells ({skipped} skipped) in {}", m.run_id, rows.len(), out.display());
        }
        Cmd::Inspect { path } => print!("{}", cmd_inspect(&path)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let AsfError::NanLoss { .. } = e {
                eprintln!("training aborted; resume from the last good checkpoint with a lower learning rate");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
