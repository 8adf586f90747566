//! Synthetic scenes and procedural per-sensor BEV renderers with weather
//! degradation and failure injection, plus the on-disk dataset format.

mod config;
mod dataset;
mod failure;
mod scene;
mod sensor;
mod weather;

pub use config::{FailureWeight, SceneConfig};
pub use dataset::{
    config_hash, make_dataset, make_frame, read_csv, render_frame, Dataset, DatasetManifest, Frame,
    FRAMES_HEADER, LABELS_HEADER,
};
pub use failure::{FailureSpec, Region, SensorFailure};
pub use scene::{generate_scene, mix_seed, Scene, PLACEMENT_RETRIES};
pub use sensor::{apply_failure, clean_signal, foreground_mask, render_sensor_fm, SensorModel};
pub use weather::Weather;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::Sensor;
    use crate::numerics::Precision;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quiet(mut cfg: SceneConfig) -> SceneConfig {
        for s in Sensor::ALL {
            let m = match s {
                Sensor::Camera => &mut cfg.camera,
                Sensor::Lidar => &mut cfg.lidar,
                Sensor::Radar => &mut cfg.radar,
            };
            m.noise_std = 0.0;
            m.dropout = 0.0;
            m.clutter.clear();
        }
        cfg
    }

    #[test]
    fn default_models_respect_weather_ordering() {
        let cfg = SceneConfig::default();
        cfg.validate().unwrap();
        for s in Sensor::ALL {
            let m = cfg.model(s);
            assert_eq!(m.attenuation(Weather::Normal), 1.0);
            for pair in Weather::SEVERITY_ORDER.windows(2) {
                assert!(m.attenuation(pair[1]) <= m.attenuation(pair[0]), "{s} {pair:?}");
            }
        }
        for w in [Weather::Sleet, Weather::HeavySnow] {
            let a = Sensor::ALL.map(|s| cfg.model(s).attenuation(w));
            assert!(a[2] >= a[1] && a[1] >= a[0], "{w}: {a:?}");
        }
    }

    #[test]
    fn footprint_cells_beat_background_without_noise() {
        let cfg = quiet(SceneConfig::default());
        let scene = generate_scene(3, Weather::Normal, (3, 3), cfg.grid, &cfg.classes);
        let mut r = ChaCha8Rng::seed_from_u64(0);
        for s in Sensor::ALL {
            let fm = render_sensor_fm(&scene, s, cfg.model(s), &SensorFailure::None, &mut r).unwrap();
            let fg = foreground_mask(&scene, s);
            let ch0 = &fm.data.data()[..cfg.grid.num_cells()];
            let min_fg = ch0.iter().zip(&fg).filter(|(_, f)| **f).map(|(v, _)| *v).fold(f64::INFINITY, f64::min);
            let max_bg = ch0.iter().zip(&fg).filter(|(_, f)| !**f).map(|(v, _)| *v).fold(0.0, f64::max);
            assert!(min_fg > max_bg, "{s}: {min_fg} vs {max_bg}");
        }
    }

    #[test]
    fn absent_is_all_zero_and_damage_zeroes_region() {
        let cfg = SceneConfig::default();
        let scene = generate_scene(4, Weather::Rain, (3, 5), cfg.grid, &cfg.classes);
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let fm = render_sensor_fm(&scene, Sensor::Radar, &cfg.radar, &SensorFailure::Absent, &mut r).unwrap();
        assert!(fm.data.data().iter().all(|v| *v == 0.0));
        let failure = SensorFailure::Damaged { region: Region::FrontHalf, severity: 1.0 };
        let fm = render_sensor_fm(&scene, Sensor::Lidar, &cfg.lidar, &failure, &mut r).unwrap();
        let (h, w) = (fm.height(), fm.width());
        for ch in 0..fm.channels() {
            for row in 0..h {
                for col in 0..w {
                    let v = fm.data.get(&[ch, row, col]);
                    if Region::FrontHalf.contains(row, col, h, w) {
                        assert_eq!(v, 0.0);
                    }
                }
            }
        }
        let mask = "camera=absent".parse::<FailureSpec>().unwrap().mask();
        assert!(!mask.get(Sensor::Camera).is_present());
    }

    #[test]
    fn heavy_snow_energy_ratio_matches_attenuation() {
        // Monte-Carlo over 100 scenes; the band is four standard errors of
        // the ratio estimate given the configured noise levels.
        let cfg = SceneConfig::default();
        let mut sums = [[0.0; 2]; 3];
        let mut cells = [0usize; 3];
        for seed in 0..100 {
            let normal = generate_scene(seed, Weather::Normal, (3, 5), cfg.grid, &cfg.classes);
            let snow = Scene { weather: Weather::HeavySnow, ..normal.clone() };
            for s in Sensor::ALL {
                let fg = foreground_mask(&normal, s);
                cells[s.index()] += fg.iter().filter(|f| **f).count();
                for (k, sc) in [&normal, &snow].into_iter().enumerate() {
                    let mut r = ChaCha8Rng::seed_from_u64(1000 + seed);
                    let fm = render_sensor_fm(sc, s, cfg.model(s), &SensorFailure::None, &mut r).unwrap();
                    let n = cfg.grid.num_cells();
                    sums[s.index()][k] += fm.data.data()[..n].iter().zip(&fg).filter(|(_, f)| **f).map(|(v, _)| v).sum::<f64>();
                }
            }
        }
        for s in Sensor::ALL {
            let m = cfg.model(s);
            let ratio = sums[s.index()][1] / sums[s.index()][0];
            let want = m.attenuation(Weather::HeavySnow);
            let n = cells[s.index()] as f64;
            let se = n.sqrt() * (m.noise(Weather::HeavySnow) + want * m.noise(Weather::Normal)) / sums[s.index()][0];
            assert!((ratio - want).abs() < 4.0 * se + 1e-3, "{s}: {ratio} vs {want} (se {se})");
        }
    }

    #[test]
    fn dataset_round_trip_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = SceneConfig::default();
        cfg.failure_mix.push(FailureWeight { spec: "lidar=damaged:front-half:1.0".into(), weight: 1.0 });
        for precision in [Precision::F64, Precision::F32] {
            let ds = make_dataset(&cfg, 6, 42, precision).unwrap();
            assert_eq!(ds, make_dataset(&cfg, 6, 42, precision).unwrap());
            let path = dir.path().join(format!("{precision:?}"));
            ds.write(&path).unwrap();
            let back = Dataset::load(&path).unwrap();
            assert_eq!(back, ds);
            assert!(back.frames.iter().enumerate().all(|(i, f)| f.id == i));
            let again = dir.path().join(format!("{precision:?}-again"));
            back.write(&again).unwrap();
            for name in ["manifest", "labels.csv", "frames.csv", "frames/000003.bin"] {
                assert_eq!(std::fs::read(path.join(name)).unwrap(), std::fs::read(again.join(name)).unwrap());
            }
        }
        let empty = make_dataset(&cfg, 0, 1, Precision::F64).unwrap();
        let p = dir.path().join("empty");
        empty.write(&p).unwrap();
        assert_eq!(Dataset::load(&p).unwrap().frames.len(), 0);
    }

    #[test]
    fn frames_are_independent_of_dataset_size() {
        let cfg = SceneConfig::default();
        let small = make_dataset(&cfg, 3, 9, Precision::F64).unwrap();
        let big = make_dataset(&cfg, 5, 9, Precision::F64).unwrap();
        assert_eq!(small.frames[..], big.frames[..3]);
    }
}
