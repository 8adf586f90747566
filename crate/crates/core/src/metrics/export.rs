use std::fmt::Write as _;
use std::path::Path;

use crate::error::{AsfError, Result};
use crate::headloss::{BevGrid, GtBox};
use crate::numerics::checkpoint::write_records;
use crate::numerics::{Precision, Tensor};

/// Bilinear sample of channel `ch` at continuous grid coordinates (cell
/// centers on integers), clamped to the grid.
pub fn bilinear(fm: &Tensor, ch: usize, r: f64, c: f64) -> f64 {
    let (h, w) = (fm.shape()[1], fm.shape()[2]);
    let r = r.clamp(0.0, (h - 1) as f64);
    let c = c.clamp(0.0, (w - 1) as f64);
    let (r0, c0) = (r.floor() as usize, c.floor() as usize);
    let (r1, c1) = ((r0 + 1).min(h - 1), (c0 + 1).min(w - 1));
    let (fr, fc) = (r - r0 as f64, c - c0 as f64);
    let at = |rr: usize, cc: usize| fm.data()[(ch * h + rr) * w + cc];
    (1.0 - fr) * ((1.0 - fc) * at(r0, c0) + fc * at(r0, c1)) + fr * ((1.0 - fc) * at(r1, c0) + fc * at(r1, c1))
}

/// Pooled features of one object.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectFeature {
    pub object: usize,
    pub class: usize,
    /// `C·pool²`, channel-major.
    pub values: Vec<f64>,
}

/// Pools the axis-aligned bounds of every box to `pool × pool` by bilinear
/// sampling of a `C×H×W` map. Boxes are clipped to the grid; boxes wholly
/// outside are skipped and noted.
pub fn export_object_features(
    fm: &Tensor,
    grid: &BevGrid,
    gts: &[GtBox],
    pool: usize,
) -> Result<(Vec<ObjectFeature>, Vec<String>)> {
    if fm.rank() != 3 || fm.shape()[1] != grid.rows || fm.shape()[2] != grid.cols || pool == 0 {
        return Err(AsfError::Dimension(format!(
            "feature export needs C×{}×{} and pool > 0, got {:?}",
            grid.rows,
            grid.cols,
            fm.shape()
        )));
    }
    let c = fm.shape()[0];
    let mut out = Vec::new();
    let mut notes = Vec::new();
    for (i, g) in gts.iter().enumerate() {
        let (x0, y0, x1, y1) = g.bbox.bev_aabb();
        let (x0, x1) = (x0.max(grid.x_min), x1.min(grid.x_max()));
        let (y0, y1) = (y0.max(grid.y_min), y1.min(grid.y_max()));
        if x0 >= x1 || y0 >= y1 {
            notes.push(format!("object {i} lies outside the grid, skipped"));
            continue;
        }
        let (r0, c0) = grid.to_grid(x0, y0);
        let (r1, c1) = grid.to_grid(x1, y1);
        let mut values = Vec::with_capacity(c * pool * pool);
        for ch in 0..c {
            for a in 0..pool {
                let r = r0 + (a as f64 + 0.5) / pool as f64 * (r1 - r0);
                for b in 0..pool {
                    let cc = c0 + (b as f64 + 0.5) / pool as f64 * (c1 - c0);
                    values.push(bilinear(fm, ch, r, cc));
                }
            }
        }
        out.push(ObjectFeature {
            object: i,
            class: g.class,
            values,
        });
    }
    Ok((out, notes))
}

/// Tags of one exported record.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTag {
    pub frame: usize,
    /// `encoder`, `post-UCP` or `post-CASAP`.
    pub stage: String,
    /// Sensor name, or `fused`.
    pub sensor: String,
    pub weather: String,
}

/// Writes `features.bin` (one record per object) and `index.csv`.
pub fn write_feature_export(
    dir: &Path,
    records: &[(FeatureTag, ObjectFeature)],
    config_hash: &str,
    precision: Precision,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| AsfError::io(dir, e))?;
    let mut index = format!("# config_hash={config_hash}\nrecord,frame,object,class,stage,sensor,weather,length\n");
    let mut tensors = Vec::with_capacity(records.len());
    for (i, (tag, f)) in records.iter().enumerate() {
        let name = format!("r{i:06}");
        let _ = writeln!(
            index,
            "{name},{},{},{},{},{},{},{}",
            tag.frame,
            f.object,
            f.class,
            tag.stage,
            tag.sensor,
            tag.weather,
            f.values.len()
        );
        tensors.push((name, Tensor::new(vec![f.values.len()], f.values.clone())?));
    }
    write_records(&dir.join("features.bin"), &tensors, precision)?;
    let p = dir.join("index.csv");
    std::fs::write(&p, index).map_err(|e| AsfError::io(&p, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::headloss::Box3d;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gt(x: f64, y: f64) -> GtBox {
        GtBox { bbox: Box3d::new(x, y, 0.8, 4.0, 2.0, 1.6, 0.4), class: 1 }
    }

    #[test]
    fn constant_map_pools_to_constant() {
        let grid = BevGrid::desk();
        let fm = Tensor::filled(&[3, 16, 16], 2.5);
        let (f, notes) = export_object_features(&fm, &grid, &[gt(10.0, 0.0), gt(1.0, 12.0)], 4).unwrap();
        assert!(notes.is_empty());
        for o in &f {
            assert_eq!(o.values.len(), 3 * 16);
            assert!(o.values.iter().all(|v| (*v - 2.5).abs() < 1e-12));
        }
        let (f, notes) = export_object_features(&fm, &grid, &[gt(-20.0, 0.0)], 2).unwrap();
        assert!(f.is_empty() && notes.len() == 1);
    }

    #[test]
    fn bilinear_at_cell_centers_is_indexing() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let fm = Tensor::randn(&[2, 5, 7], 1.0, &mut r);
        for ch in 0..2 {
            for i in 0..5 {
                for j in 0..7 {
                    assert_eq!(bilinear(&fm, ch, i as f64, j as f64), fm.get(&[ch, i, j]));
                }
            }
        }
    }
}
