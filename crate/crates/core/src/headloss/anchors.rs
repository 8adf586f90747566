use serde::{Deserialize, Serialize};

use super::boxes::Box3d;
use crate::error::{AsfError, Result};

/// Geometry of the BEV grid: row `r` spans `x`, column `c` spans `y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BevGrid {
    pub x_min: f64,
    pub y_min: f64,
    /// Cell edge in meters.
    pub cell: f64,
    pub rows: usize,
    pub cols: usize,
}

impl BevGrid {
    /// `[0, 25.6] × [−12.8, 12.8]` at 1.6 m, a 16×16 grid.
    pub fn desk() -> Self {
        Self {
            x_min: 0.0,
            y_min: -12.8,
            cell: 1.6,
            rows: 16,
            cols: 16,
        }
    }

    pub fn x_max(&self) -> f64 {
        self.x_min + self.rows as f64 * self.cell
    }

    pub fn y_max(&self) -> f64 {
        self.y_min + self.cols as f64 * self.cell
    }

    pub fn num_cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.x_min + (row as f64 + 0.5) * self.cell,
            self.y_min + (col as f64 + 0.5) * self.cell,
        )
    }

    /// Continuous `(row, col)` coordinates of a metric point; cell centers
    /// land on integers.
    pub fn to_grid(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.x_min) / self.cell - 0.5,
            (y - self.y_min) / self.cell - 0.5,
        )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max() && y >= self.y_min && y <= self.y_max()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell > 0.0) || self.rows == 0 || self.cols == 0 {
            return Err(AsfError::Config(format!(
                "grid needs positive extent, got {}×{} cells of {} m",
                self.rows, self.cols, self.cell
            )));
        }
        Ok(())
    }
}

/// Prior box size and height for one class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassPrior {
    pub name: String,
    pub xl: f64,
    pub yl: f64,
    pub zl: f64,
    /// Center height.
    pub z: f64,
}

impl ClassPrior {
    pub fn desk_classes() -> Vec<ClassPrior> {
        vec![
            ClassPrior {
                name: "sedan".into(),
                xl: 4.4,
                yl: 1.9,
                zl: 1.6,
                z: 0.8,
            },
            ClassPrior {
                name: "truck".into(),
                xl: 7.2,
                yl: 2.6,
                zl: 3.0,
                z: 1.5,
            },
        ]
    }
}

/// Anchor yaws: along the x axis and across it.
pub const ANCHOR_YAWS: [f64; 2] = [0.0, std::f64::consts::FRAC_PI_2];

/// Two anchors per class at every BEV cell, indexed
/// `((row·W + col)·classes + class)·2 + yaw`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorGrid {
    pub grid: BevGrid,
    pub num_classes: usize,
    anchors: Vec<Box3d>,
}

impl AnchorGrid {
    pub fn new(grid: BevGrid, priors: &[ClassPrior]) -> Self {
        let mut anchors = Vec::with_capacity(grid.num_cells() * priors.len() * 2);
        for r in 0..grid.rows {
            for c in 0..grid.cols {
                let (x, y) = grid.cell_center(r, c);
                for p in priors {
                    for yaw in ANCHOR_YAWS {
                        anchors.push(Box3d::new(x, y, p.z, p.xl, p.yl, p.zl, yaw));
                    }
                }
            }
        }
        Self {
            grid,
            num_classes: priors.len(),
            anchors,
        }
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn per_cell(&self) -> usize {
        self.num_classes * 2
    }

    pub fn anchor(&self, i: usize) -> &Box3d {
        &self.anchors[i]
    }

    pub fn anchors(&self) -> &[Box3d] {
        &self.anchors
    }

    pub fn class_of(&self, i: usize) -> usize {
        (i / 2) % self.num_classes
    }

    pub fn index(&self, row: usize, col: usize, class: usize, yaw: usize) -> usize {
        ((row * self.grid.cols + col) * self.num_classes + class) * 2 + yaw
    }

    /// Anchors of `class` whose cell center lies within `radius` of `(x, y)`.
    pub fn near(&self, x: f64, y: f64, radius: f64, class: usize) -> Vec<usize> {
        let g = &self.grid;
        let (gr, gc) = g.to_grid(x, y);
        let span = radius / g.cell + 1.0;
        let lo = |v: f64| (v - span).floor().max(0.0) as usize;
        let hi = |v: f64, n: usize| ((v + span).ceil().max(0.0) as usize).min(n.saturating_sub(1));
        let mut out = Vec::new();
        if gr + span < 0.0 || gc + span < 0.0 {
            return out;
        }
        for r in lo(gr)..=hi(gr, g.rows) {
            for c in lo(gc)..=hi(gc, g.cols) {
                let (cx, cy) = g.cell_center(r, c);
                if (cx - x).hypot(cy - y) <= radius {
                    out.push(self.index(r, c, class, 0));
                    out.push(self.index(r, c, class, 1));
                }
            }
        }
        out
    }
}
