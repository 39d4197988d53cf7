//! Uniform Catmull-Rom smoothing of waypoint polylines.

use crate::geom::Vec3;
use crate::grid_world::{first_collision, Occupancy};

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothPath {
    pub samples: Vec<Vec3>,
    pub source_waypoints: Vec<Vec3>,
    pub samples_per_segment: usize,
}

/// Point at parameter `t` in `[0, 1]` of the span `p1 -> p2`.
pub fn catmull_rom_point(p0: Vec3, p1: Vec3, p2: Vec3, p3: Vec3, t: f64) -> Vec3 {
    let t2 = t * t;
    let t3 = t2 * t;
    let w0 = (-t3 + 2.0 * t2 - t) * 0.5;
    let w1 = (3.0 * t3 - 5.0 * t2 + 2.0) * 0.5;
    let w2 = (-3.0 * t3 + 4.0 * t2 + t) * 0.5;
    let w3 = (t3 - t2) * 0.5;
    p0 * w0 + p1 * w1 + p2 * w2 + p3 * w3
}

/// Sample the spline through `waypoints`, `samples_per_segment` samples per
/// span plus the final endpoint. The first and last waypoints are duplicated
/// to supply the missing outer control points, so the curve runs through
/// every waypoint including both ends.
pub fn catmull_rom(waypoints: &[Vec3], samples_per_segment: usize) -> SmoothPath {
    let sps = samples_per_segment.max(1);
    let n = waypoints.len();
    if n < 2 {
        return SmoothPath {
            samples: waypoints.to_vec(),
            source_waypoints: waypoints.to_vec(),
            samples_per_segment: sps,
        };
    }
    let at = |i: isize| waypoints[i.clamp(0, n as isize - 1) as usize];
    let mut samples = Vec::with_capacity((n - 1) * sps + 1);
    for k in 0..n - 1 {
        let k = k as isize;
        let (p0, p1, p2, p3) = (at(k - 1), at(k), at(k + 1), at(k + 2));
        samples.push(p1);
        for s in 1..sps {
            samples.push(catmull_rom_point(p0, p1, p2, p3, s as f64 / sps as f64));
        }
    }
    samples.push(waypoints[n - 1]);
    SmoothPath {
        samples,
        source_waypoints: waypoints.to_vec(),
        samples_per_segment: sps,
    }
}

/// True when the sampled curve, taken as a polyline, touches no blocked cell.
pub fn validate_smooth<O: Occupancy + ?Sized>(occ: &O, path: &SmoothPath) -> bool {
    first_collision(occ, &path.samples).hit.is_none()
}

/// The smoothed samples when they stay clear, otherwise the raw polyline.
pub fn smooth_or_raw<O: Occupancy + ?Sized>(
    occ: &O,
    waypoints: &[Vec3],
    samples_per_segment: usize,
) -> (Vec<Vec3>, bool) {
    let smooth = catmull_rom(waypoints, samples_per_segment);
    if validate_smooth(occ, &smooth) {
        (smooth.samples, true)
    } else {
        (waypoints.to_vec(), false)
    }
}
