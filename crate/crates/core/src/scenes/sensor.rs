use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::failure::SensorFailure;
use super::scene::Scene;
use super::weather::Weather;
use crate::error::{AsfError, Result};
use crate::fusion::{FeatureMap, Sensor};
use crate::numerics::Tensor;

/// Procedural stand-in for one sensor's BEV encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorModel {
    pub channels: usize,
    /// Peak footprint amplitude in clear weather.
    pub signal: f64,
    /// Additive zero-mean noise std in clear weather.
    pub noise_std: f64,
    /// Probability a cell returns nothing.
    pub dropout: f64,
    /// Signal multiplier per weather, in `[0, 1]`.
    pub attenuation: BTreeMap<Weather, f64>,
    /// Extra noise std per weather; negative values clean the background.
    pub clutter: BTreeMap<Weather, f64>,
}

fn table(values: [f64; 7]) -> BTreeMap<Weather, f64> {
    Weather::ALL.into_iter().zip(values).collect()
}

impl SensorModel {
    pub fn default_for(sensor: Sensor) -> Self {
        //                      normal overcast fog  rain  sleet lsnow hsnow
        match sensor {
            Sensor::Camera => Self {
                channels: 6,
                signal: 1.0,
                noise_std: 0.05,
                dropout: 0.0,
                attenuation: table([1.0, 0.85, 0.5, 0.6, 0.4, 0.5, 0.25]),
                clutter: table([0.0, 0.05, 0.2, 0.15, 0.25, 0.2, 0.35]),
            },
            Sensor::Lidar => Self {
                channels: 8,
                signal: 1.0,
                noise_std: 0.03,
                dropout: 0.02,
                attenuation: table([1.0, 0.95, 0.7, 0.8, 0.55, 0.7, 0.45]),
                clutter: table([0.0, 0.0, 0.1, 0.08, 0.2, 0.15, 0.3]),
            },
            Sensor::Radar => Self {
                channels: 4,
                signal: 0.8,
                noise_std: 0.08,
                dropout: 0.05,
                attenuation: table([1.0, 1.0, 1.0, 0.97, 0.95, 0.97, 0.93]),
                clutter: table([0.0, 0.0, -0.02, 0.02, 0.03, 0.02, 0.05]),
            },
        }
    }

    pub fn attenuation(&self, w: Weather) -> f64 {
        self.attenuation.get(&w).copied().unwrap_or(1.0)
    }

    pub fn noise(&self, w: Weather) -> f64 {
        (self.noise_std + self.clutter.get(&w).copied().unwrap_or(0.0)).max(0.0)
    }

    pub fn validate(&self, sensor: Sensor) -> Result<()> {
        let need = [6, 8, 4][sensor.index()];
        if self.channels != need {
            return Err(AsfError::Config(format!(
                "{sensor} renderer produces {need} channels, config says {}",
                self.channels
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) || self.noise_std < 0.0 || self.signal <= 0.0 {
            return Err(AsfError::Config(format!("{sensor} signal, noise or dropout out of range")));
        }
        for (w, a) in &self.attenuation {
            if !(0.0..=1.0).contains(a) {
                return Err(AsfError::Config(format!("{sensor} attenuation for {w} is {a}, not in [0, 1]")));
            }
        }
        if self.attenuation(Weather::Normal) != 1.0 {
            return Err(AsfError::Config(format!("{sensor} attenuation in normal weather must be 1")));
        }
        Ok(())
    }
}

/// What a cell sees of the scene: covered fraction and the attributes of
/// the object covering it most.
#[derive(Clone, Copy, Debug, Default)]
struct CellView {
    cover: f64,
    class: usize,
    cos2: f64,
    sin2: f64,
    xl: f64,
    yl: f64,
    zl: f64,
}

const SUBSAMPLES: usize = 4;

fn footprint(scene: &Scene) -> Vec<CellView> {
    let g = &scene.grid;
    let mut cells = vec![CellView::default(); g.num_cells()];
    for o in &scene.objects {
        let (x0, y0, x1, y1) = o.bbox.bev_aabb();
        let r0 = (((x0 - g.x_min) / g.cell).floor().max(0.0)) as usize;
        let c0 = (((y0 - g.y_min) / g.cell).floor().max(0.0)) as usize;
        let r1 = (((x1 - g.x_min) / g.cell).ceil().max(0.0) as usize).min(g.rows);
        let c1 = (((y1 - g.y_min) / g.cell).ceil().max(0.0) as usize).min(g.cols);
        let yaw = o.bbox.yaw();
        for r in r0..r1 {
            for c in c0..c1 {
                let mut hits = 0;
                for i in 0..SUBSAMPLES {
                    for j in 0..SUBSAMPLES {
                        let px = g.x_min + (r as f64 + (i as f64 + 0.5) / SUBSAMPLES as f64) * g.cell;
                        let py = g.y_min + (c as f64 + (j as f64 + 0.5) / SUBSAMPLES as f64) * g.cell;
                        hits += o.bbox.contains_bev(px, py) as usize;
                    }
                }
                let cover = hits as f64 / (SUBSAMPLES * SUBSAMPLES) as f64;
                let cell = &mut cells[r * g.cols + c];
                if cover > cell.cover {
                    *cell = CellView {
                        cover,
                        class: o.class,
                        cos2: (2.0 * yaw).cos(),
                        sin2: (2.0 * yaw).sin(),
                        xl: o.bbox.xl,
                        yl: o.bbox.yl,
                        zl: o.bbox.zl,
                    };
                }
            }
        }
    }
    cells
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (2.5 * sigma).ceil() as i64;
    let k: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur of a `rows × cols` plane with zero padding.
fn blur(plane: &[f64], rows: usize, cols: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let rad = (k.len() / 2) as i64;
    let mut tmp = vec![0.0; plane.len()];
    for r in 0..rows {
        for c in 0..cols {
            let mut s = 0.0;
            for (i, w) in k.iter().enumerate() {
                let cc = c as i64 + i as i64 - rad;
                if cc >= 0 && (cc as usize) < cols {
                    s += w * plane[r * cols + cc as usize];
                }
            }
            tmp[r * cols + c] = s;
        }
    }
    let mut out = vec![0.0; plane.len()];
    for r in 0..rows {
        for c in 0..cols {
            let mut s = 0.0;
            for (i, w) in k.iter().enumerate() {
                let rr = r as i64 + i as i64 - rad;
                if rr >= 0 && (rr as usize) < rows {
                    s += w * tmp[rr as usize * cols + c];
                }
            }
            out[r * cols + c] = s;
        }
    }
    out
}

/// Noise-free, clear-weather signal planes of one sensor.
pub fn clean_signal(scene: &Scene, sensor: Sensor) -> Vec<Vec<f64>> {
    let g = &scene.grid;
    let (rows, cols) = (g.rows, g.cols);
    let cells = footprint(scene);
    let range = |r: usize| (r as f64 + 0.5) / rows as f64;
    let plane = |f: &dyn Fn(usize, &CellView) -> f64| -> Vec<f64> {
        cells.iter().enumerate().map(|(i, v)| f(i / cols, v)).collect()
    };
    let truck = |v: &CellView| (v.class > 0) as u8 as f64;
    match sensor {
        Sensor::Camera => {
            // blurred intensity with only a weak range cue
            let fade = |r: usize| 1.0 - 0.4 * range(r);
            let attrs = [
                plane(&|r, v| v.cover * fade(r)),
                plane(&|r, v| v.cover * fade(r) * truck(v)),
                plane(&|r, v| v.cover * fade(r) * v.cos2),
                plane(&|r, v| v.cover * fade(r) * v.sin2),
                plane(&|r, v| v.cover * fade(r) * (1.0 - range(r))),
                plane(&|r, v| v.cover * fade(r) * v.zl / 3.0),
            ];
            attrs.iter().map(|p| blur(p, rows, cols, 0.8)).collect()
        }
        Sensor::Lidar => {
            // sharp occupancy whose density decays with range
            let d = |r: usize| 1.0 - 0.8 * range(r);
            let occ = plane(&|r, v| v.cover * d(r));
            let smooth = blur(&occ, rows, cols, 0.7);
            let edge: Vec<f64> = occ.iter().zip(&smooth).map(|(a, b)| (a - b).abs()).collect();
            vec![
                occ.clone(),
                plane(&|r, v| v.cover * d(r) * v.zl / 3.0),
                plane(&|r, v| v.cover * d(r) * v.cos2),
                plane(&|r, v| v.cover * d(r) * v.sin2),
                plane(&|r, v| v.cover * d(r) * v.xl / 8.0),
                plane(&|r, v| v.cover * d(r) * v.yl / 3.0),
                edge,
                plane(&|r, v| v.cover * d(r) * truck(v)),
            ]
        }
        Sensor::Radar => {
            // coarse blobs at object centers plus a wide sidelobe ring
            let mut blob = vec![0.0; rows * cols];
            let mut doppler = vec![0.0; rows * cols];
            let sigma = 1.2 * g.cell;
            for o in &scene.objects {
                let rcs = if o.class > 0 { 1.0 } else { 0.7 };
                for r in 0..rows {
                    for c in 0..cols {
                        let (x, y) = g.cell_center(r, c);
                        let d2 = (x - o.bbox.x).powi(2) + (y - o.bbox.y).powi(2);
                        let v = rcs * (-d2 / (2.0 * sigma * sigma)).exp();
                        blob[r * cols + c] += v;
                        doppler[r * cols + c] += v * o.bbox.cos_yaw;
                    }
                }
            }
            let blob: Vec<f64> = blob.into_iter().map(|v| v.min(1.0)).collect();
            let side = blur(&blob, rows, cols, 2.5);
            let rng_cue: Vec<f64> = blob.iter().enumerate().map(|(i, v)| v * range(i / cols)).collect();
            vec![blob, doppler, rng_cue, side.into_iter().map(|v| 0.3 * v).collect()]
        }
    }
}

/// Renders one sensor's feature map: clean signal scaled by the weather
/// attenuation, cell dropout, additive zero-mean noise, then the failure.
pub fn render_sensor_fm<R: Rng + ?Sized>(
    scene: &Scene,
    sensor: Sensor,
    model: &SensorModel,
    failure: &SensorFailure,
    rng: &mut R,
) -> Result<FeatureMap> {
    let g = &scene.grid;
    let (rows, cols) = (g.rows, g.cols);
    let planes = clean_signal(scene, sensor);
    if planes.len() != model.channels {
        return Err(AsfError::Config(format!(
            "{sensor} renders {} channels, model declares {}",
            planes.len(),
            model.channels
        )));
    }
    let gain = model.signal * model.attenuation(scene.weather);
    let noise = Normal::new(0.0, model.noise(scene.weather).max(1e-300)).expect("finite std");
    let keep: Vec<bool> = (0..rows * cols).map(|_| !rng.gen_bool(model.dropout)).collect();
    let mut data = Vec::with_capacity(model.channels * rows * cols);
    for p in &planes {
        for (i, v) in p.iter().enumerate() {
            let s = if keep[i] { gain * v } else { 0.0 };
            data.push(s + noise.sample(rng));
        }
    }
    let mut fm = FeatureMap::new(sensor, Tensor::new(vec![model.channels, rows, cols], data)?)?;
    apply_failure(&mut fm, failure);
    Ok(fm)
}

/// Absent sensors become all-zero; damaged regions are scaled by
/// `1 − severity`.
pub fn apply_failure(fm: &mut FeatureMap, failure: &SensorFailure) {
    let (c, h, w) = (fm.channels(), fm.height(), fm.width());
    let data = fm.data.data_mut();
    match *failure {
        SensorFailure::None => {}
        SensorFailure::Absent => data.fill(0.0),
        SensorFailure::Damaged { region, severity } => {
            let keep = 1.0 - severity;
            for ch in 0..c {
                for r in 0..h {
                    for col in 0..w {
                        if region.contains(r, col, h, w) {
                            let v = &mut data[(ch * h + r) * w + col];
                            *v = if keep == 0.0 { 0.0 } else { *v * keep };
                        }
                    }
                }
            }
        }
    }
}

/// Cells where the sensor's first clean channel carries signal.
pub fn foreground_mask(scene: &Scene, sensor: Sensor) -> Vec<bool> {
    clean_signal(scene, sensor)[0].iter().map(|v| *v > 0.05).collect()
}
