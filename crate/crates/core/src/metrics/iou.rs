use crate::headloss::Box3d;

const AREA_EPS: f64 = 1e-12;

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Shoelace area, positive for counter-clockwise polygons.
pub fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        s += a.0 * b.1 - b.0 * a.1;
    }
    0.5 * s
}

/// Sutherland–Hodgman: clips `subject` by the convex counter-clockwise
/// polygon `clip`.
pub fn clip_polygon(subject: &[(f64, f64)], clip: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cin = cross(a, b, cur) >= 0.0;
            let pin = cross(a, b, prev) >= 0.0;
            if cin {
                if !pin {
                    out.push(intersect(prev, cur, a, b));
                }
                out.push(cur);
            } else if pin {
                out.push(intersect(prev, cur, a, b));
            }
        }
    }
    out
}

fn intersect(p: (f64, f64), q: (f64, f64), a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let dp = cross(a, b, p);
    let dq = cross(a, b, q);
    let denom = dp - dq;
    if denom.abs() < f64::MIN_POSITIVE {
        return q;
    }
    let t = dp / denom;
    (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
}

/// Area of the intersection of two BEV footprints.
pub fn bev_intersection(a: &Box3d, b: &Box3d) -> f64 {
    let reach = a.bev_radius() + b.bev_radius();
    if (a.x - b.x).hypot(a.y - b.y) > reach {
        return 0.0;
    }
    polygon_area(&clip_polygon(&a.bev_corners(), &b.bev_corners())).max(0.0)
}

/// Rotated-rectangle IoU in the ground plane.
pub fn rotated_iou_bev(a: &Box3d, b: &Box3d) -> f64 {
    let (aa, ab) = (a.bev_area(), b.bev_area());
    if aa <= AREA_EPS || ab <= AREA_EPS {
        return 0.0;
    }
    // Clip the same way round regardless of argument order so the result is
    // symmetric to rounding.
    let (p, q) = if order_key(a) <= order_key(b) { (a, b) } else { (b, a) };
    let inter = bev_intersection(p, q);
    let union = aa + ab - inter;
    if union <= AREA_EPS || inter <= AREA_EPS {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

fn order_key(b: &Box3d) -> [u64; 8] {
    [b.x, b.y, b.z, b.xl, b.yl, b.zl, b.cos_yaw, b.sin_yaw].map(|v| v.to_bits())
}

/// Full 3D IoU: BEV intersection times vertical overlap over union volume.
pub fn iou_3d(a: &Box3d, b: &Box3d) -> f64 {
    let (va, vb) = (a.volume(), b.volume());
    if va <= AREA_EPS || vb <= AREA_EPS {
        return 0.0;
    }
    let (a0, a1) = a.z_range();
    let (b0, b1) = b.z_range();
    let dz = (a1.min(b1) - a0.max(b0)).max(0.0);
    if dz <= 0.0 {
        return 0.0;
    }
    let (p, q) = if order_key(a) <= order_key(b) { (a, b) } else { (b, a) };
    let inter = bev_intersection(p, q) * dz;
    let union = va + vb - inter;
    if union <= AREA_EPS || inter <= AREA_EPS {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}
