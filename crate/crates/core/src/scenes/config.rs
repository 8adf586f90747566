use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::failure::FailureSpec;
use super::sensor::SensorModel;
use super::weather::Weather;
use crate::error::{AsfError, Result};
use crate::fusion::Sensor;
use crate::headloss::{BevGrid, ClassPrior};

/// A failure spec and its sampling weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureWeight {
    /// `none` or `;`-separated `sensor=failure` entries.
    pub spec: String,
    pub weight: f64,
}

/// Everything the simulator needs to produce frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub grid: BevGrid,
    pub min_objects: usize,
    pub max_objects: usize,
    pub classes: Vec<ClassPrior>,
    pub camera: SensorModel,
    pub lidar: SensorModel,
    pub radar: SensorModel,
    pub weather_mix: BTreeMap<Weather, f64>,
    pub failure_mix: Vec<FailureWeight>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            grid: BevGrid::desk(),
            min_objects: 2,
            max_objects: 6,
            classes: ClassPrior::desk_classes(),
            camera: SensorModel::default_for(Sensor::Camera),
            lidar: SensorModel::default_for(Sensor::Lidar),
            radar: SensorModel::default_for(Sensor::Radar),
            weather_mix: Weather::ALL.into_iter().map(|w| (w, 1.0)).collect(),
            failure_mix: vec![FailureWeight {
                spec: "none".into(),
                weight: 1.0,
            }],
        }
    }
}

impl SceneConfig {
    pub fn model(&self, s: Sensor) -> &SensorModel {
        match s {
            Sensor::Camera => &self.camera,
            Sensor::Lidar => &self.lidar,
            Sensor::Radar => &self.radar,
        }
    }

    pub fn channels(&self) -> [usize; 3] {
        Sensor::ALL.map(|s| self.model(s).channels)
    }

    pub fn failures(&self) -> Result<Vec<(FailureSpec, f64)>> {
        self.failure_mix
            .iter()
            .map(|f| Ok((f.spec.parse()?, f.weight)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        for s in Sensor::ALL {
            self.model(s).validate(s)?;
        }
        if self.min_objects > self.max_objects {
            return Err(AsfError::Config("min_objects exceeds max_objects".into()));
        }
        if self.classes.is_empty() {
            return Err(AsfError::Config("scenes need at least one class".into()));
        }
        check_weights("weather_mix", self.weather_mix.values().copied())?;
        check_weights("failure_mix", self.failure_mix.iter().map(|f| f.weight))?;
        self.failures()?;
        Ok(())
    }
}

fn check_weights(what: &str, w: impl Iterator<Item = f64>) -> Result<()> {
    let w: Vec<f64> = w.collect();
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
        return Err(AsfError::Config(format!("{what} weights must be nonnegative with a positive sum")));
    }
    Ok(())
}
