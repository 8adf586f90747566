use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AsfError, Result};
use crate::numerics::Tensor;

/// The three sensing modalities, in their fixed fusion order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sensor {
    Camera,
    Lidar,
    Radar,
}

impl Sensor {
    pub const ALL: [Sensor; 3] = [Sensor::Camera, Sensor::Lidar, Sensor::Radar];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        match self {
            Sensor::Camera => 'C',
            Sensor::Lidar => 'L',
            Sensor::Radar => 'R',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Sensor::Camera => "camera",
            Sensor::Lidar => "lidar",
            Sensor::Radar => "radar",
        }
    }
}

impl fmt::Display for Sensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Sensor {
    type Err = AsfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "camera" | "c" => Ok(Sensor::Camera),
            "lidar" | "l" => Ok(Sensor::Lidar),
            "radar" | "r" => Ok(Sensor::Radar),
            other => Err(AsfError::Config(format!("unknown sensor `{other}`"))),
        }
    }
}

/// A non-empty subset of sensors, stored as a bitmask over `C`, `L`, `R`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SensorSet(u8);

impl SensorSet {
    pub const FULL: SensorSet = SensorSet(0b111);

    /// Every non-empty combination, ordered single sensors first, then
    /// pairs, then all three: C, L, R, LR, CR, CL, CLR.
    pub const COMBINATIONS: [SensorSet; 7] = [
        SensorSet(0b001),
        SensorSet(0b010),
        SensorSet(0b100),
        SensorSet(0b110),
        SensorSet(0b101),
        SensorSet(0b011),
        SensorSet(0b111),
    ];

    pub fn from_sensors(sensors: &[Sensor]) -> Self {
        SensorSet(sensors.iter().fold(0, |m, s| m | (1 << s.index())))
    }

    pub fn contains(self, s: Sensor) -> bool {
        self.0 & (1 << s.index()) != 0
    }

    pub fn sensors(self) -> impl Iterator<Item = Sensor> {
        Sensor::ALL.into_iter().filter(move |&s| self.contains(s))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Letters in `CLR` order, e.g. `LR`.
    pub fn code(self) -> String {
        self.sensors().map(Sensor::letter).collect()
    }
}

impl fmt::Display for SensorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

impl FromStr for SensorSet {
    type Err = AsfError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.replace(['+', ' '], "");
        let mut sensors = Vec::new();
        for ch in s.chars() {
            sensors.push(ch.to_string().parse::<Sensor>()?);
        }
        let set = SensorSet::from_sensors(&sensors);
        if set.is_empty() {
            return Err(AsfError::Config(format!("empty sensor combination `{s}`")));
        }
        Ok(set)
    }
}

/// Runtime status of one sensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Availability {
    Available,
    Absent,
    /// Present but corrupted; the severity is informational only. Fusion
    /// treats degraded sensors as available and must discover the damage
    /// from the feature values themselves.
    Degraded(f64),
}

impl Availability {
    pub fn is_present(self) -> bool {
        !matches!(self, Availability::Absent)
    }
}

/// Per-sensor availability for one fusion call.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AvailabilityMask(pub [Availability; 3]);

impl AvailabilityMask {
    pub fn all() -> Self {
        Self([Availability::Available; 3])
    }

    pub fn from_set(set: SensorSet) -> Self {
        let mut m = [Availability::Absent; 3];
        for s in set.sensors() {
            m[s.index()] = Availability::Available;
        }
        Self(m)
    }

    pub fn get(&self, s: Sensor) -> Availability {
        self.0[s.index()]
    }

    pub fn set(&mut self, s: Sensor, a: Availability) {
        self.0[s.index()] = a;
    }

    /// Sensors that contribute keys, in fusion order.
    pub fn present(&self) -> SensorSet {
        SensorSet::from_sensors(
            &Sensor::ALL
                .into_iter()
                .filter(|s| self.get(*s).is_present())
                .collect::<Vec<_>>(),
        )
    }

    /// Restricts this mask to the sensors in `set`.
    pub fn restrict(&self, set: SensorSet) -> Self {
        let mut m = *self;
        for s in Sensor::ALL {
            if !set.contains(s) {
                m.set(s, Availability::Absent);
            }
        }
        m
    }
}

/// One sensor's bird's-eye-view feature grid, `C_s × H × W`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub sensor: Sensor,
    pub data: Tensor,
}

impl FeatureMap {
    pub fn new(sensor: Sensor, data: Tensor) -> Result<Self> {
        if data.rank() != 3 {
            return Err(AsfError::Dimension(format!(
                "feature map must be C×H×W, got {:?}",
                data.shape()
            )));
        }
        Ok(Self { sensor, data })
    }

    pub fn zeros(sensor: Sensor, channels: usize, height: usize, width: usize) -> Self {
        Self {
            sensor,
            data: Tensor::zeros(&[channels, height, width]),
        }
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[2]
    }
}

/// Feature maps of one frame, one optional slot per sensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SensorBundle {
    maps: [Option<FeatureMap>; 3],
}

impl SensorBundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_maps(maps: impl IntoIterator<Item = FeatureMap>) -> Result<Self> {
        let mut b = Self::new();
        for m in maps {
            b.insert(m)?;
        }
        Ok(b)
    }

    /// Adds a map; spatial extents must agree with maps already present.
    pub fn insert(&mut self, fm: FeatureMap) -> Result<()> {
        if let Some(other) = self.maps.iter().flatten().next() {
            if other.height() != fm.height() || other.width() != fm.width() {
                return Err(AsfError::Dimension(format!(
                    "{} map is {}×{}, {} map is {}×{}",
                    fm.sensor,
                    fm.height(),
                    fm.width(),
                    other.sensor,
                    other.height(),
                    other.width()
                )));
            }
        }
        let slot = fm.sensor.index();
        self.maps[slot] = Some(fm);
        Ok(())
    }

    pub fn remove(&mut self, s: Sensor) -> Option<FeatureMap> {
        self.maps[s.index()].take()
    }

    pub fn get(&self, s: Sensor) -> Option<&FeatureMap> {
        self.maps[s.index()].as_ref()
    }

    pub fn get_mut(&mut self, s: Sensor) -> Option<&mut FeatureMap> {
        self.maps[s.index()].as_mut()
    }

    pub fn sensors(&self) -> SensorSet {
        SensorSet::from_sensors(
            &Sensor::ALL
                .into_iter()
                .filter(|s| self.maps[s.index()].is_some())
                .collect::<Vec<_>>(),
        )
    }

    /// `(H, W)` shared by every map.
    pub fn extent(&self) -> Option<(usize, usize)> {
        self.maps
            .iter()
            .flatten()
            .next()
            .map(|m| (m.height(), m.width()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &FeatureMap> {
        self.maps.iter().flatten()
    }
}
