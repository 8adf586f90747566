use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::AsfError;

/// Weather condition, declared mildest first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weather {
    Normal,
    Overcast,
    Fog,
    Rain,
    Sleet,
    LightSnow,
    HeavySnow,
}

impl Weather {
    pub const ALL: [Weather; 7] = [
        Weather::Normal,
        Weather::Overcast,
        Weather::Fog,
        Weather::Rain,
        Weather::Sleet,
        Weather::LightSnow,
        Weather::HeavySnow,
    ];

    /// Conditions along which every sensor's signal must not increase.
    pub const SEVERITY_ORDER: [Weather; 5] = [
        Weather::Normal,
        Weather::Overcast,
        Weather::Rain,
        Weather::Sleet,
        Weather::HeavySnow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Weather::Normal => "normal",
            Weather::Overcast => "overcast",
            Weather::Fog => "fog",
            Weather::Rain => "rain",
            Weather::Sleet => "sleet",
            Weather::LightSnow => "light_snow",
            Weather::HeavySnow => "heavy_snow",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Weather {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Weather {
    type Err = AsfError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        Weather::ALL
            .into_iter()
            .find(|w| w.name().replace('_', "") == key)
            .ok_or_else(|| AsfError::Config(format!("unknown weather '{s}'")))
    }
}
