use std::collections::BTreeMap;
use std::io::Write;

use crate::fusion::{Sensor, SensorAttentionMap};
use crate::headloss::BevGrid;
use crate::scenes::Weather;

/// One frame's attention map with what the tables group by.
pub struct SamRecord<'a> {
    pub sam: &'a SensorAttentionMap,
    pub weather: Weather,
    pub grid: BevGrid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttnRatioRow {
    pub key: String,
    /// Percent per sensor in fusion order; sums to 100.
    pub ratios: [f64; 3],
    pub patches: usize,
}

/// Mean sensor attention per group, in percent.
#[derive(Clone, Debug, PartialEq)]
pub struct AttnRatioTable {
    pub key_name: String,
    pub rows: Vec<AttnRatioRow>,
    /// Empty groups, listed instead of emitted as rows.
    pub notes: Vec<String>,
}

impl AttnRatioTable {
    pub fn row(&self, key: &str) -> Option<&AttnRatioRow> {
        self.rows.iter().find(|r| r.key == key)
    }

    pub fn write_csv<W: Write>(&self, config_hash: &str, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "# config_hash={config_hash} unit=percent mean=heads,queries,banks,patches")?;
        for n in &self.notes {
            writeln!(w, "# {n}")?;
        }
        writeln!(w, "{},camera,lidar,radar,patches", self.key_name)?;
        for r in &self.rows {
            writeln!(w, "{},{:.3},{:.3},{:.3},{}", r.key, r.ratios[0], r.ratios[1], r.ratios[2], r.patches)?;
        }
        Ok(())
    }
}

fn finish(key_name: &str, groups: Vec<(String, [f64; 3], usize)>) -> AttnRatioTable {
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for (key, sum, n) in groups {
        let total: f64 = sum.iter().sum();
        if n == 0 || total <= 0.0 {
            notes.push(format!("{key_name} {key}: no patches, row omitted"));
            continue;
        }
        rows.push(AttnRatioRow {
            key,
            ratios: sum.map(|v| 100.0 * v / total),
            patches: n,
        });
    }
    AttnRatioTable {
        key_name: key_name.into(),
        rows,
        notes,
    }
}

/// Patch center in meters.
fn patch_center(sam: &SensorAttentionMap, grid: &BevGrid, patch: usize) -> (f64, f64) {
    let (pr, pc) = (patch / sam.grid_cols, patch % sam.grid_cols);
    let ph = grid.rows as f64 / sam.grid_rows as f64 * grid.cell;
    let pw = grid.cols as f64 / sam.grid_cols as f64 * grid.cell;
    (grid.x_min + (pr as f64 + 0.5) * ph, grid.y_min + (pc as f64 + 0.5) * pw)
}

/// Tables by weather and by radial distance from the ego vehicle in bins of
/// `bin_width` meters.
pub fn attention_ratio_report(records: &[SamRecord], bin_width: f64) -> (AttnRatioTable, AttnRatioTable) {
    let mut by_weather: BTreeMap<Weather, ([f64; 3], usize)> =
        Weather::ALL.into_iter().map(|w| (w, ([0.0; 3], 0))).collect();
    let mut by_dist: BTreeMap<usize, ([f64; 3], usize)> = BTreeMap::new();
    let mut max_bin = 0;
    for rec in records {
        for p in 0..rec.sam.num_patches() {
            let m = rec.sam.patch_mean(p);
            let (x, y) = patch_center(rec.sam, &rec.grid, p);
            let bin = (x.hypot(y) / bin_width).floor() as usize;
            max_bin = max_bin.max(bin);
            for (acc, n) in [by_weather.get_mut(&rec.weather).unwrap(), by_dist.entry(bin).or_default()] {
                for s in Sensor::ALL {
                    acc[s.index()] += m[s.index()];
                }
                *n += 1;
            }
        }
    }
    let weather = finish(
        "weather",
        by_weather.into_iter().map(|(w, (s, n))| (w.to_string(), s, n)).collect(),
    );
    let dist = finish(
        "distance_m",
        (0..=max_bin)
            .map(|b| {
                let (s, n) = by_dist.get(&b).copied().unwrap_or_default();
                (format!("{:.1}-{:.1}", b as f64 * bin_width, (b + 1) as f64 * bin_width), s, n)
            })
            .collect(),
    );
    (weather, dist)
}
