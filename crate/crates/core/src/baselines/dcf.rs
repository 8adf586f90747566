use crate::error::{AsfError, Result};
use crate::fusion::{Sensor, SensorBundle};
use crate::numerics::{matmul, Tensor};

/// Channel-concatenation fusion as a downstream head sees it: the head is
/// built for one fixed concatenated width.
#[derive(Clone, Debug, PartialEq)]
pub struct DcfParams {
    /// Channels expected from camera, LiDAR and radar.
    pub channels: [usize; 3],
    /// Optional 1×1 mixing `out × ΣC_s`.
    pub mix: Option<Tensor>,
}

impl DcfParams {
    pub fn new(channels: [usize; 3]) -> Self {
        Self { channels, mix: None }
    }

    pub fn expected_width(&self) -> usize {
        self.channels.iter().sum()
    }
}

/// Concatenates the sensor maps in camera, LiDAR, radar order and applies
/// the optional mixing layer.
///
/// Fails with [`AsfError::FusedWidthMismatch`] whenever the concatenation
/// does not have the width the head was built for, which is what happens as
/// soon as a sensor is missing.
pub fn dcf_concat_fuse(bundle: &SensorBundle, params: &DcfParams) -> Result<Tensor> {
    let actual: usize = bundle.iter().map(|fm| fm.channels()).sum();
    let expected = params.expected_width();
    let complete = Sensor::ALL
        .iter()
        .all(|&s| bundle.get(s).map(|fm| fm.channels()) == Some(params.channels[s.index()]));
    if actual != expected || !complete {
        return Err(AsfError::FusedWidthMismatch { expected, actual });
    }
    let (h, w) = bundle.extent().expect("complete bundle has an extent");
    let mut data = Vec::with_capacity(expected * h * w);
    for s in Sensor::ALL {
        data.extend_from_slice(bundle.get(s).expect("checked").data.data());
    }
    let cat = Tensor::new(vec![expected, h * w], data)?;
    let out = match &params.mix {
        None => cat,
        Some(m) => matmul(m, &cat)?,
    };
    let c = out.shape()[0];
    out.reshape(&[c, h, w])
}
