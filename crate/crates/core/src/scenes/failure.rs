use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AsfError, Result};
use crate::fusion::{Availability, AvailabilityMask, Sensor};

/// Part of the grid a damaged sensor loses. Rows run along x (range),
/// columns along y.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Full,
    /// Rows in the nearer half of the range.
    NearHalf,
    FarHalf,
    /// Columns with `y > 0`.
    LeftHalf,
    RightHalf,
    /// The central half of the columns: the corridor straight ahead.
    FrontHalf,
    /// Half-open cell rectangle `[r0, r1) × [c0, c1)`, clipped to the grid.
    Rect { r0: usize, c0: usize, r1: usize, c1: usize },
}

impl Region {
    pub fn contains(&self, r: usize, c: usize, rows: usize, cols: usize) -> bool {
        match *self {
            Region::Full => true,
            Region::NearHalf => r < rows / 2,
            Region::FarHalf => r >= rows / 2,
            Region::LeftHalf => c >= cols / 2,
            Region::RightHalf => c < cols / 2,
            Region::FrontHalf => c >= cols / 4 && c < cols - cols / 4,
            Region::Rect { r0, c0, r1, c1 } => r >= r0 && r < r1.min(rows) && c >= c0 && c < c1.min(cols),
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Full => f.write_str("full"),
            Region::NearHalf => f.write_str("near-half"),
            Region::FarHalf => f.write_str("far-half"),
            Region::LeftHalf => f.write_str("left-half"),
            Region::RightHalf => f.write_str("right-half"),
            Region::FrontHalf => f.write_str("front-half"),
            Region::Rect { r0, c0, r1, c1 } => write!(f, "rect/{r0}/{c0}/{r1}/{c1}"),
        }
    }
}

impl FromStr for Region {
    type Err = AsfError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "full" => Region::Full,
            "near-half" => Region::NearHalf,
            "far-half" => Region::FarHalf,
            "left-half" => Region::LeftHalf,
            "right-half" => Region::RightHalf,
            "front-half" => Region::FrontHalf,
            _ => {
                let parts: Vec<&str> = s.split('/').collect();
                if parts.len() != 5 || parts[0] != "rect" {
                    return Err(AsfError::Config(format!("unknown damage region '{s}'")));
                }
                let n = |i: usize| -> Result<usize> {
                    parts[i]
                        .parse()
                        .map_err(|_| AsfError::Config(format!("bad rect bound '{}' in '{s}'", parts[i])))
                };
                let (r0, c0, r1, c1) = (n(1)?, n(2)?, n(3)?, n(4)?);
                if r0 >= r1 || c0 >= c1 {
                    return Err(AsfError::Config(format!("empty rect '{s}'")));
                }
                Region::Rect { r0, c0, r1, c1 }
            }
        })
    }
}

/// Failure state of one sensor.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum SensorFailure {
    #[default]
    None,
    Absent,
    /// Values inside the region are scaled by `1 − severity`.
    Damaged { region: Region, severity: f64 },
}

impl SensorFailure {
    pub fn availability(&self) -> Availability {
        match *self {
            SensorFailure::None => Availability::Available,
            SensorFailure::Absent => Availability::Absent,
            SensorFailure::Damaged { severity, .. } => Availability::Degraded(severity),
        }
    }
}

impl fmt::Display for SensorFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SensorFailure::None => f.write_str("none"),
            SensorFailure::Absent => f.write_str("absent"),
            SensorFailure::Damaged { region, severity } => write!(f, "damaged:{region}:{severity}"),
        }
    }
}

impl FromStr for SensorFailure {
    type Err = AsfError;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        match parts.next() {
            Some("none") if parts.next().is_none() => Ok(SensorFailure::None),
            Some("absent") if parts.next().is_none() => Ok(SensorFailure::Absent),
            Some("damaged") => {
                let region: Region = parts.next().unwrap_or("full").parse()?;
                let severity: f64 = match parts.next() {
                    None => 1.0,
                    Some(v) => v
                        .parse()
                        .map_err(|_| AsfError::Config(format!("bad severity '{v}' in '{s}'")))?,
                };
                if parts.next().is_some() || !(0.0..=1.0).contains(&severity) {
                    return Err(AsfError::Config(format!("bad damage spec '{s}'")));
                }
                Ok(SensorFailure::Damaged { region, severity })
            }
            _ => Err(AsfError::Config(format!("unknown failure '{s}'"))),
        }
    }
}

/// Failure state of all three sensors.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct FailureSpec(pub [SensorFailure; 3]);

impl FailureSpec {
    pub fn none() -> Self {
        Self::default()
    }

    /// Damaged camera: its left half fully blanked.
    pub fn camera_damaged() -> Self {
        let mut f = Self::none();
        f.0[Sensor::Camera.index()] = SensorFailure::Damaged {
            region: Region::LeftHalf,
            severity: 1.0,
        };
        f
    }

    /// Damaged LiDAR: the forward corridor blocked.
    pub fn lidar_damaged() -> Self {
        let mut f = Self::none();
        f.0[Sensor::Lidar.index()] = SensorFailure::Damaged {
            region: Region::FrontHalf,
            severity: 1.0,
        };
        f
    }

    pub fn get(&self, s: Sensor) -> SensorFailure {
        self.0[s.index()]
    }

    pub fn set(&mut self, s: Sensor, f: SensorFailure) {
        self.0[s.index()] = f;
    }

    pub fn mask(&self) -> AvailabilityMask {
        AvailabilityMask(Sensor::ALL.map(|s| self.get(s).availability()))
    }

    pub fn is_none(&self) -> bool {
        self.0.iter().all(|f| *f == SensorFailure::None)
    }

    /// Merges `sensor=failure` into this spec.
    pub fn apply_arg(&mut self, arg: &str) -> Result<()> {
        let (s, f) = arg
            .split_once('=')
            .ok_or_else(|| AsfError::Config(format!("failure '{arg}' is not sensor=spec")))?;
        self.set(s.parse()?, f.parse()?);
        Ok(())
    }
}

impl fmt::Display for FailureSpec {
    /// `none`, or `;`-separated `sensor=failure` entries.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_none() {
            return f.write_str("none");
        }
        let parts: Vec<String> = Sensor::ALL
            .iter()
            .filter(|s| self.get(**s) != SensorFailure::None)
            .map(|s| format!("{}={}", s.name(), self.get(*s)))
            .collect();
        f.write_str(&parts.join(";"))
    }
}

impl FromStr for FailureSpec {
    type Err = AsfError;

    fn from_str(s: &str) -> Result<Self> {
        let mut spec = FailureSpec::none();
        let s = s.trim();
        if s.is_empty() || s == "none" {
            return Ok(spec);
        }
        for part in s.split([';', ',']) {
            spec.apply_arg(part.trim())?;
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_print_round_trip() {
        for text in [
            "none",
            "camera=absent",
            "lidar=damaged:front-half:1",
            "camera=damaged:left-half:0.5;radar=absent",
            "radar=damaged:rect/1/2/5/6:0.25",
        ] {
            let spec: FailureSpec = text.parse().unwrap();
            assert_eq!(spec.to_string(), text);
            assert_eq!(spec.to_string().parse::<FailureSpec>().unwrap(), spec);
        }
        assert_eq!("lidar=damaged:front-half:1.0".parse::<FailureSpec>().unwrap(), FailureSpec::lidar_damaged());
    }

    #[test]
    fn bad_specs_are_config_errors() {
        for text in ["camera", "sonar=absent", "camera=broken", "lidar=damaged:top:1", "lidar=damaged:full:2"] {
            assert!(matches!(text.parse::<FailureSpec>(), Err(AsfError::Config(_))), "{text}");
        }
    }

    #[test]
    fn masks_follow_failures() {
        let mask = "camera=absent;lidar=damaged:full:0.3".parse::<FailureSpec>().unwrap().mask();
        assert_eq!(mask.get(Sensor::Camera), Availability::Absent);
        assert_eq!(mask.get(Sensor::Lidar), Availability::Degraded(0.3));
        assert_eq!(mask.get(Sensor::Radar), Availability::Available);
    }
}
