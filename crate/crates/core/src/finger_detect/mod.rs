//! Geometric detection of stretched-out fingers on the hand silhouette.
//!
//! The palm center is the mask pixel farthest from the background. Scanning
//! the outer contour, points that are far from the palm center and sit on a
//! sharp turn of the contour are taken as fingertips; each tip gets a root
//! where the line back to the palm center enters the thick part of the mask,
//! and the joints in between are interpolated. Detected fingers are then
//! labelled by the nearest finger of a baseline pose.

mod boundary;
mod distance;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use boundary::{boundary_pixels, largest_component, trace_boundary};
pub use distance::{distance_transform, palm_center, DistanceMap};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DepthImage, HandPose, ImagePoint, Mask, Pixel, Point3, SkeletonSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    /// Tips must be farther than this multiple of the palm radius from the palm center.
    pub distance_threshold_ratio: f64,
    /// Half-width, in contour samples, of the arc used for local maxima and turning angle.
    pub curvature_window: usize,
    /// Minimum turning angle (radians) between the arc endpoints.
    pub curvature_min: f64,
    /// Fractions along root→tip of the interior chain joints; equal spacing when unset.
    pub interpolation_fractions: Option<Vec<f64>>,
    /// Roots sit where the distance map first reaches this fraction of the palm radius.
    pub root_ratio: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            distance_threshold_ratio: 1.6,
            curvature_window: 11,
            curvature_min: 0.8,
            interpolation_fractions: None,
            root_ratio: 0.5,
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |r: &str| Err(Error::invalid("detect config", r.to_string()));
        if !(self.distance_threshold_ratio > 1.0) {
            return bad("distance_threshold_ratio must exceed 1");
        }
        if self.curvature_window < 2 {
            return bad("curvature_window must be at least 2");
        }
        if !(self.curvature_min > 0.0 && self.curvature_min < PI) {
            return bad("curvature_min must lie in (0, pi)");
        }
        if !(self.root_ratio > 0.0 && self.root_ratio <= 1.0) {
            return bad("root_ratio must lie in (0, 1]");
        }
        if let Some(f) = &self.interpolation_fractions {
            if f.iter().any(|x| !(*x > 0.0 && *x < 1.0)) || f.windows(2).any(|w| w[0] >= w[1]) {
                return bad("interpolation_fractions must be increasing and inside (0, 1)");
            }
        }
        Ok(())
    }

    /// Fractions of every chain joint, root (0) first and tip (1) last.
    pub fn chain_fractions(&self, chain_len: usize) -> Result<Vec<f64>> {
        let interior = match &self.interpolation_fractions {
            Some(f) => {
                if f.len() + 2 != chain_len {
                    return Err(Error::invalid(
                        "detect config",
                        format!("{} interpolation fractions for a chain of {chain_len}", f.len()),
                    ));
                }
                f.clone()
            }
            None => (1..chain_len - 1).map(|k| k as f64 / (chain_len - 1) as f64).collect(),
        };
        let mut out = Vec::with_capacity(chain_len);
        out.push(0.0);
        out.extend(interior);
        out.push(1.0);
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectedFinger {
    pub tip: Pixel,
    pub root: Pixel,
    /// Chain joints root→tip in image coordinates.
    pub joints: Vec<ImagePoint>,
    /// The same joints lifted to camera space with image depths.
    pub joints_3d: Vec<[f64; 3]>,
    /// Index of the skeleton finger chain assigned to this detection.
    pub identity: Option<usize>,
    pub tip_distance: f64,
}

impl DetectedFinger {
    pub fn points_3d(&self) -> Vec<Point3> {
        self.joints_3d.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect()
    }
}

/// Everything the detector found in one image; serializes as the debug dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub palm_center: Pixel,
    pub palm_radius: f64,
    pub fingers: Vec<DetectedFinger>,
}

impl Detection {
    pub fn identified(&self) -> impl Iterator<Item = (usize, &DetectedFinger)> {
        self.fingers.iter().filter_map(|f| f.identity.map(|i| (i, f)))
    }
}

fn dist(a: Pixel, b: Pixel) -> f64 {
    (((a.u - b.u) as f64).powi(2) + ((a.v - b.v) as f64).powi(2)).sqrt()
}

/// Turning angle at `p` between the arc endpoints `a` and `b`: π minus the
/// angle between `a − p` and `b − p`. Sharp protrusions approach π.
pub fn turning_angle(a: Pixel, p: Pixel, b: Pixel) -> f64 {
    let (x1, y1) = ((a.u - p.u) as f64, (a.v - p.v) as f64);
    let (x2, y2) = ((b.u - p.u) as f64, (b.v - p.v) as f64);
    let n = (x1 * x1 + y1 * y1).sqrt() * (x2 * x2 + y2 * y2).sqrt();
    if n == 0.0 {
        return 0.0;
    }
    PI - ((x1 * x2 + y1 * y2) / n).clamp(-1.0, 1.0).acos()
}

/// Fingertip pixels, farthest first, at most five.
pub fn detect_fingertips(boundary: &[Pixel], center: Pixel, palm_radius: f64, cfg: &DetectConfig) -> Vec<Pixel> {
    let w = cfg.curvature_window;
    let n = boundary.len();
    if n < 2 * w + 1 {
        return Vec::new();
    }
    let d: Vec<f64> = boundary.iter().map(|&p| dist(p, center)).collect();
    let threshold = cfg.distance_threshold_ratio * palm_radius;
    let at = |i: isize| (i.rem_euclid(n as isize)) as usize;

    let mut candidates = Vec::new();
    for i in 0..n {
        if d[i] <= threshold {
            continue;
        }
        let local_max = (1..=w as isize).all(|k| d[i] >= d[at(i as isize - k)] && d[i] >= d[at(i as isize + k)]);
        if !local_max {
            continue;
        }
        let turn = turning_angle(boundary[at(i as isize - w as isize)], boundary[i], boundary[at(i as isize + w as isize)]);
        if turn >= cfg.curvature_min {
            candidates.push(i);
        }
    }
    if candidates.is_empty() {
        return Vec::new();
    }

    // group candidates closer than the window along the loop, wrapping around
    let mut groups: Vec<Vec<usize>> = vec![vec![candidates[0]]];
    for pair in candidates.windows(2) {
        if pair[1] - pair[0] < w {
            groups.last_mut().unwrap().push(pair[1]);
        } else {
            groups.push(vec![pair[1]]);
        }
    }
    if groups.len() > 1 && candidates[0] + n - candidates[candidates.len() - 1] < w {
        let last = groups.pop().unwrap();
        groups[0].extend(last);
    }
    let mut tips: Vec<usize> = groups
        .iter()
        .map(|g| {
            *g.iter()
                .max_by(|&&a, &&b| d[a].total_cmp(&d[b]).then(b.cmp(&a)))
                .unwrap()
        })
        .collect();
    tips.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(a.cmp(&b)));
    tips.truncate(5);
    tips.into_iter().map(|i| boundary[i]).collect()
}

/// Root of the finger ending at `tip`: the first unit step from the tip toward
/// the palm center where the distance map reaches `ratio × palm_radius`.
/// Without such a step, the point at `palm_radius` from the center.
pub fn locate_root(tip: Pixel, center: Pixel, dmap: &DistanceMap, palm_radius: f64, ratio: f64) -> Pixel {
    let len = dist(tip, center);
    let steps = len.ceil() as usize;
    let (du, dv) = ((center.u - tip.u) as f64, (center.v - tip.v) as f64);
    for s in 0..=steps {
        let t = if steps == 0 { 0.0 } else { s as f64 / steps as f64 };
        let p = ImagePoint {
            u: tip.u as f64 + du * t,
            v: tip.v as f64 + dv * t,
        }
        .round();
        if dmap.at(p) >= ratio * palm_radius {
            return p;
        }
    }
    if len == 0.0 {
        return tip;
    }
    let k = (palm_radius / len).min(1.0);
    ImagePoint {
        u: center.u as f64 - du * k,
        v: center.v as f64 - dv * k,
    }
    .round()
}

/// Chain joints root→tip at `fractions` along the segment.
pub fn interpolate_joints(tip: Pixel, root: Pixel, fractions: &[f64]) -> Vec<ImagePoint> {
    fractions
        .iter()
        .map(|&t| ImagePoint {
            u: root.u as f64 + (tip.u - root.u) as f64 * t,
            v: root.v as f64 + (tip.v - root.v) as f64 * t,
        })
        .collect()
}

/// Depth of the foreground pixel nearest to `p` (Euclidean), searching up to
/// `max_radius` pixels away.
pub fn nearest_foreground_depth(img: &DepthImage, p: Pixel, max_radius: i32) -> Option<f32> {
    if img.is_foreground(p) {
        return Some(img.depth_or_background(p.u, p.v));
    }
    let mut best: Option<(i32, f32)> = None;
    for r in 1..=max_radius {
        if let Some((d2, _)) = best {
            if r * r > d2 {
                break;
            }
        }
        for dv in -r..=r {
            for du in -r..=r {
                if du.abs() != r && dv.abs() != r {
                    continue;
                }
                let q = Pixel::new(p.u + du, p.v + dv);
                if img.is_foreground(q) {
                    let d2 = du * du + dv * dv;
                    if best.map_or(true, |(b, _)| d2 < b) {
                        best = Some((d2, img.depth_or_background(q.u, q.v)));
                    }
                }
            }
        }
    }
    best.map(|(_, d)| d)
}

/// Lifts image points to camera space using the depth at (or nearest to) each point.
pub fn lift_points(img: &DepthImage, intr: &CameraIntrinsics, points: &[ImagePoint], fallback_depth: f32) -> Vec<Point3> {
    points
        .iter()
        .map(|q| {
            let d = nearest_foreground_depth(img, q.round(), 40).unwrap_or(fallback_depth);
            intr.backproject_uvd(q.u, q.v, d as f64)
        })
        .collect()
}

/// Sum of squared distances between detected chain joints and a baseline chain.
pub fn identity_cost(detected: &[Point3], baseline: &[Point3]) -> f64 {
    if detected.len() != baseline.len() {
        return f64::INFINITY;
    }
    detected.iter().zip(baseline).map(|(a, b)| (a - b).norm_squared()).sum()
}

/// Assigns each detection the baseline finger with the smallest chain cost,
/// greedily in increasing cost order so that no finger is used twice.
pub fn match_identity(detected: &[Vec<Point3>], baseline: &HandPose) -> Vec<Option<usize>> {
    let chains = &baseline.skeleton.finger_chains;
    let mut costs = Vec::new();
    for (d, joints) in detected.iter().enumerate() {
        for (f, chain) in chains.iter().enumerate() {
            let c = identity_cost(joints, &baseline.gather(chain));
            if c.is_finite() {
                costs.push((c, d, f));
            }
        }
    }
    costs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![None; detected.len()];
    let mut used = vec![false; chains.len()];
    for (_, d, f) in costs {
        if out[d].is_none() && !used[f] {
            out[d] = Some(f);
            used[f] = true;
        }
    }
    out
}

/// Tips, roots and interpolated joints of the stretched fingers in `img`;
/// identities stay unassigned.
pub fn detect_fingers(
    img: &DepthImage,
    intr: &CameraIntrinsics,
    skeleton: &SkeletonSpec,
    cfg: &DetectConfig,
) -> Result<Detection> {
    let mask = crate::geometry::foreground_mask(img);
    if mask.count() == 0 {
        return Err(Error::NoHand);
    }
    detect_in_mask(img, &mask, intr, skeleton, cfg)
}

fn detect_in_mask(
    img: &DepthImage,
    mask: &Mask,
    intr: &CameraIntrinsics,
    skeleton: &SkeletonSpec,
    cfg: &DetectConfig,
) -> Result<Detection> {
    let hand = largest_component(mask)?;
    let dmap = distance_transform(&hand)?;
    let (center, radius) = palm_center(&dmap)?;
    let boundary = trace_boundary(&hand)?;
    let tips = detect_fingertips(&boundary, center, radius, cfg);
    let center_depth = img.depth_or_background(center.u, center.v);
    let mut fingers = Vec::with_capacity(tips.len());
    for tip in tips {
        let root = locate_root(tip, center, &dmap, radius, cfg.root_ratio);
        // every chain in a skeleton has the same length
        let fractions = cfg.chain_fractions(skeleton.finger_chains[0].len())?;
        let joints = interpolate_joints(tip, root, &fractions);
        let lifted = lift_points(img, intr, &joints, center_depth);
        fingers.push(DetectedFinger {
            tip,
            root,
            joints,
            joints_3d: lifted.iter().map(|p| [p.x, p.y, p.z]).collect(),
            identity: None,
            tip_distance: dist(tip, center),
        });
    }
    Ok(Detection {
        palm_center: center,
        palm_radius: radius,
        fingers,
    })
}

/// Detection followed by identity matching against `baseline`.
pub fn detect_and_identify(
    img: &DepthImage,
    intr: &CameraIntrinsics,
    baseline: &HandPose,
    cfg: &DetectConfig,
) -> Result<Detection> {
    let mut det = detect_fingers(img, intr, &baseline.skeleton, cfg)?;
    let lifted: Vec<Vec<Point3>> = det.fingers.iter().map(|f| f.points_3d()).collect();
    for (f, id) in det.fingers.iter_mut().zip(match_identity(&lifted, baseline)) {
        f.identity = id;
    }
    Ok(det)
}
