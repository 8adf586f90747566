//! Availability-aware fusion of camera, LiDAR and 4D radar bird's-eye-view
//! feature maps.

pub mod error;
pub mod experiment;
pub mod baselines;
pub mod fusion;
pub mod headloss;
pub mod metrics;
pub mod numerics;
pub mod scenes;

pub use error::{AsfError, Result};
