use serde::{Deserialize, Serialize};

/// Oriented 3D box: center, size along heading/lateral/vertical, and yaw as
/// a `(cos, sin)` pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box3d {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub xl: f64,
    pub yl: f64,
    pub zl: f64,
    pub cos_yaw: f64,
    pub sin_yaw: f64,
}

impl Box3d {
    pub fn new(x: f64, y: f64, z: f64, xl: f64, yl: f64, zl: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            z,
            xl,
            yl,
            zl,
            cos_yaw: yaw.cos(),
            sin_yaw: yaw.sin(),
        }
    }

    pub fn yaw(&self) -> f64 {
        self.sin_yaw.atan2(self.cos_yaw)
    }

    /// Rescales `(cos, sin)` to unit length.
    pub fn normalized(mut self) -> Self {
        let n = self.cos_yaw.hypot(self.sin_yaw);
        if n > 0.0 {
            self.cos_yaw /= n;
            self.sin_yaw /= n;
        } else {
            self.cos_yaw = 1.0;
            self.sin_yaw = 0.0;
        }
        self
    }

    pub fn bev_area(&self) -> f64 {
        self.xl * self.yl
    }

    pub fn volume(&self) -> f64 {
        self.xl * self.yl * self.zl
    }

    /// Corners of the BEV footprint, counter-clockwise.
    pub fn bev_corners(&self) -> [(f64, f64); 4] {
        let n = self.cos_yaw.hypot(self.sin_yaw).max(f64::MIN_POSITIVE);
        let (c, s) = (self.cos_yaw / n, self.sin_yaw / n);
        let (hx, hy) = (self.xl / 2.0, self.yl / 2.0);
        [(hx, hy), (-hx, hy), (-hx, -hy), (hx, -hy)].map(|(u, v)| {
            (self.x + u * c - v * s, self.y + u * s + v * c)
        })
    }

    /// Half-diagonal of the footprint; bounds the reach from the center.
    pub fn bev_radius(&self) -> f64 {
        0.5 * self.xl.hypot(self.yl)
    }

    /// Axis-aligned bounds `(x_min, y_min, x_max, y_max)` of the footprint.
    pub fn bev_aabb(&self) -> (f64, f64, f64, f64) {
        let cs = self.bev_corners();
        let fold = |f: fn(f64, f64) -> f64, init: f64, pick: fn(&(f64, f64)) -> f64| {
            cs.iter().map(pick).fold(init, f)
        };
        (
            fold(f64::min, f64::INFINITY, |p| p.0),
            fold(f64::min, f64::INFINITY, |p| p.1),
            fold(f64::max, f64::NEG_INFINITY, |p| p.0),
            fold(f64::max, f64::NEG_INFINITY, |p| p.1),
        )
    }

    pub fn contains_bev(&self, px: f64, py: f64) -> bool {
        let n = self.cos_yaw.hypot(self.sin_yaw).max(f64::MIN_POSITIVE);
        let (c, s) = (self.cos_yaw / n, self.sin_yaw / n);
        let (dx, dy) = (px - self.x, py - self.y);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        u.abs() <= self.xl / 2.0 && v.abs() <= self.yl / 2.0
    }

    pub fn z_range(&self) -> (f64, f64) {
        (self.z - self.zl / 2.0, self.z + self.zl / 2.0)
    }
}

/// Number of regression values per anchor.
pub const BOX_CODE_SIZE: usize = 8;

/// Residual encoding of `gt` relative to `anchor`: center offsets scaled by
/// the anchor diagonal (height for z), log size ratios, and the cosine/sine
/// of the yaw difference.
pub fn encode_box(gt: &Box3d, anchor: &Box3d) -> [f64; BOX_CODE_SIZE] {
    let diag = anchor.xl.hypot(anchor.yl);
    let dyaw = gt.yaw() - anchor.yaw();
    [
        (gt.x - anchor.x) / diag,
        (gt.y - anchor.y) / diag,
        (gt.z - anchor.z) / anchor.zl,
        (gt.xl / anchor.xl).ln(),
        (gt.yl / anchor.yl).ln(),
        (gt.zl / anchor.zl).ln(),
        dyaw.cos(),
        dyaw.sin(),
    ]
}

/// Inverse of [`encode_box`]; the yaw pair is renormalized.
pub fn decode_box(code: &[f64], anchor: &Box3d) -> Box3d {
    let diag = anchor.xl.hypot(anchor.yl);
    let dyaw = code[7].atan2(code[6]);
    let yaw = anchor.yaw() + dyaw;
    let clamp = |v: f64| v.clamp(-4.0, 4.0);
    Box3d {
        x: anchor.x + code[0] * diag,
        y: anchor.y + code[1] * diag,
        z: anchor.z + code[2] * anchor.zl,
        xl: anchor.xl * clamp(code[3]).exp(),
        yl: anchor.yl * clamp(code[4]).exp(),
        zl: anchor.zl * clamp(code[5]).exp(),
        cos_yaw: yaw.cos(),
        sin_yaw: yaw.sin(),
    }
    .normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn encode_decode_round_trip(x in -20.0..20.0f64, y in -20.0..20.0f64, yaw in -3.1..3.1f64,
                                    xl in 0.5..10.0f64, yl in 0.5..4.0f64, ayaw in prop::sample::select(vec![0.0, std::f64::consts::FRAC_PI_2])) {
            let gt = Box3d::new(x, y, 0.8, xl, yl, 1.6, yaw);
            let anchor = Box3d::new(1.0, -2.0, 0.9, 4.5, 1.9, 1.6, ayaw);
            let back = decode_box(&encode_box(&gt, &anchor), &anchor);
            prop_assert!((back.x - gt.x).abs() < 1e-9);
            prop_assert!((back.y - gt.y).abs() < 1e-9);
            prop_assert!((back.xl - gt.xl).abs() < 1e-9);
            prop_assert!((back.cos_yaw - gt.cos_yaw).abs() < 1e-9);
            prop_assert!((back.sin_yaw - gt.sin_yaw).abs() < 1e-9);
            prop_assert!((back.cos_yaw.hypot(back.sin_yaw) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn corners_and_containment() {
        let b = Box3d::new(0.0, 0.0, 0.0, 4.0, 2.0, 1.0, 0.0);
        assert!(b.contains_bev(1.9, 0.9));
        assert!(!b.contains_bev(2.1, 0.0));
        let r = Box3d::new(0.0, 0.0, 0.0, 4.0, 2.0, 1.0, std::f64::consts::FRAC_PI_2);
        assert!(r.contains_bev(0.0, 1.9));
        assert!(!r.contains_bev(1.9, 0.0));
    }
}
