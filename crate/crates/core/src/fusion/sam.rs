use std::io::Write;

use super::types::{Sensor, SensorSet};

/// Per-patch distribution of attention mass over sensors.
///
/// Mass for `(bank, patch, sensor)` is the attention weight on that sensor's
/// key averaged over heads and over the bank's queries. Absent sensors hold
/// exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorAttentionMap {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub banks: usize,
    pub present: SensorSet,
    /// `[bank][patch][sensor]`, sensor in fusion order.
    mass: Vec<[f64; 3]>,
}

impl SensorAttentionMap {
    pub fn new(
        grid_rows: usize,
        grid_cols: usize,
        banks: usize,
        present: SensorSet,
        mass: Vec<[f64; 3]>,
    ) -> Self {
        assert_eq!(mass.len(), banks * grid_rows * grid_cols);
        Self {
            grid_rows,
            grid_cols,
            banks,
            present,
            mass,
        }
    }

    /// Uniform mass over the present sensors.
    pub fn uniform(grid_rows: usize, grid_cols: usize, banks: usize, present: SensorSet) -> Self {
        let share = 1.0 / present.len() as f64;
        let mut cell = [0.0; 3];
        for s in present.sensors() {
            cell[s.index()] = share;
        }
        Self::new(
            grid_rows,
            grid_cols,
            banks,
            present,
            vec![cell; banks * grid_rows * grid_cols],
        )
    }

    pub fn num_patches(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    pub fn mass(&self, bank: usize, patch: usize, sensor: Sensor) -> f64 {
        self.mass[bank * self.num_patches() + patch][sensor.index()]
    }

    pub fn patch_masses(&self, bank: usize, patch: usize) -> [f64; 3] {
        self.mass[bank * self.num_patches() + patch]
    }

    /// Mass of every patch averaged over banks.
    pub fn patch_mean(&self, patch: usize) -> [f64; 3] {
        let mut out = [0.0; 3];
        for b in 0..self.banks {
            for (o, m) in out.iter_mut().zip(self.patch_masses(b, patch)) {
                *o += m / self.banks as f64;
            }
        }
        out
    }

    /// Mean mass per sensor over all banks and patches.
    pub fn sensor_ratios(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for m in &self.mass {
            for s in 0..3 {
                out[s] += m[s];
            }
        }
        let n = self.mass.len() as f64;
        out.map(|v| v / n)
    }

    /// Writes rows `frame,patch_row,patch_col,bank,sensor,mass` for present
    /// sensors.
    pub fn write_csv_rows<W: Write>(&self, frame: usize, w: &mut W) -> std::io::Result<()> {
        for b in 0..self.banks {
            for p in 0..self.num_patches() {
                let (r, c) = (p / self.grid_cols, p % self.grid_cols);
                for s in self.present.sensors() {
                    writeln!(w, "{frame},{r},{c},{b},{},{:.9}", s.name(), self.mass(b, p, s))?;
                }
            }
        }
        Ok(())
    }
}
