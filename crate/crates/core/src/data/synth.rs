//! Synthetic hand depth images with exact joint ground truth.
//!
//! The palm is a flat disk whose depth bulges toward the camera; every
//! stretched finger is a capsule leaving the palm radially, and curled fingers
//! are short capsules folded in front of the palm, inside its silhouette.
//! Images are ray-cast with the pinhole model so joints project exactly where
//! the rendered surface is.

use std::sync::Arc;

use log::warn;
use nalgebra::Rotation3;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DatasetIndex, ImageSource, Sample};
use crate::error::{Error, Result};
use crate::geometry::{project, CameraIntrinsics, DepthImage, HandPose, Point3, SkeletonSpec, Vector3, DEFAULT_BACKGROUND};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthFinger {
    pub stretched: bool,
    /// In-plane angle from the palm's up axis toward its right axis, radians.
    pub angle: f64,
    /// Tilt of a stretched finger toward the camera, radians.
    pub elevation: f64,
    /// Root-to-tip length, mm.
    pub length: f64,
    /// Diameter, mm.
    pub width: f64,
}

/// Geometry of one rendered hand. `fingers` follows the skeleton's finger chains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthHandSpec {
    pub palm_radius: f64,
    /// Height of the palm dome at its center, mm.
    pub palm_bulge: f64,
    /// Palm center in camera space, mm.
    pub center: [f64; 3],
    /// In-plane rotation, radians.
    pub roll: f64,
    /// Out-of-plane tilts about the camera x and y axes, radians.
    pub tilt: [f64; 2],
    pub fingers: Vec<SynthFinger>,
    /// Standard deviation of depth noise on hand pixels, mm.
    pub noise: f64,
    pub width: usize,
    pub height: usize,
    pub intrinsics: CameraIntrinsics,
    pub background: f32,
}

impl SynthHandSpec {
    pub fn validate(&self, skeleton: &SkeletonSpec) -> Result<()> {
        let bad = |r: String| Err(Error::invalid("synthetic hand", r));
        if self.fingers.len() != skeleton.finger_chains.len() {
            return bad(format!(
                "{} fingers for a skeleton with {} chains",
                self.fingers.len(),
                skeleton.finger_chains.len()
            ));
        }
        if !(self.palm_radius > 0.0) || !(self.palm_bulge >= 0.0) || !(self.noise >= 0.0) {
            return bad("palm radius, bulge and noise must be positive".into());
        }
        if !(self.center[2] > self.palm_radius) {
            return bad("palm must lie in front of the camera".into());
        }
        for (i, f) in self.fingers.iter().enumerate() {
            if !(f.length > 0.0 && f.width > 0.0) {
                return bad(format!("finger {i} needs positive length and width"));
            }
        }
        if self.width == 0 || self.height == 0 {
            return bad("empty frame".into());
        }
        self.intrinsics.validate()
    }

    /// Palm frame: (right, up, toward-camera normal).
    fn frame(&self) -> (Vector3, Vector3, Vector3) {
        let rot = Rotation3::from_euler_angles(self.tilt[0], self.tilt[1], self.roll);
        (
            rot * Vector3::new(1.0, 0.0, 0.0),
            rot * Vector3::new(0.0, -1.0, 0.0),
            rot * Vector3::new(0.0, 0.0, -1.0),
        )
    }
}

#[derive(Clone, Debug)]
pub struct SynthHand {
    pub image: DepthImage,
    pub pose: HandPose,
    pub stretched: Vec<bool>,
    /// Part of the hand or a joint fell outside the frame.
    pub clipped: bool,
}

/// Curled finger path: (fraction of palm radius along the finger direction,
/// height toward the camera in mm) for the non-root joints.
const CURL_PATH: [(f64, f64); 3] = [(0.75, 15.0), (0.45, 25.0), (0.2, 20.0)];

struct Capsule {
    a: Point3,
    b: Point3,
    r: f64,
}

fn capsule_hit(dir: &Vector3, a: &Point3, b: &Point3, r: f64) -> Option<f64> {
    // ray from the camera origin along unit `dir`
    let ba = b - a;
    let oa = -a.coords;
    let baba = ba.dot(&ba);
    let bard = ba.dot(dir);
    let baoa = ba.dot(&oa);
    let rdoa = dir.dot(&oa);
    let oaoa = oa.dot(&oa);
    let qa = baba - bard * bard;
    let qb = baba * rdoa - baoa * bard;
    let qc = baba * oaoa - baoa * baoa - r * r * baba;
    let h = qb * qb - qa * qc;
    if h < 0.0 {
        return None;
    }
    if qa > 1e-12 {
        let t = (-qb - h.sqrt()) / qa;
        let y = baoa + t * bard;
        if y > 0.0 && y < baba {
            return Some(t);
        }
    }
    // spherical caps
    let y = baoa + if qa > 1e-12 { (-qb - h.sqrt()) / qa * bard } else { 0.0 };
    let oc = if y <= 0.0 { oa } else { -b.coords };
    let hb = dir.dot(&oc);
    let hc = oc.dot(&oc) - r * r;
    let hh = hb * hb - hc;
    if hh > 0.0 {
        Some(-hb - hh.sqrt())
    } else {
        None
    }
}

/// Renders `spec`; `seed` drives the depth noise only.
pub fn generate_synth(spec: &SynthHandSpec, skeleton: &Arc<SkeletonSpec>, seed: u64) -> Result<SynthHand> {
    spec.validate(skeleton)?;
    let (right, up, normal) = spec.frame();
    let p = Point3::from(spec.center);
    let r_palm = spec.palm_radius;

    let mut joints = vec![Point3::origin(); skeleton.joint_count];
    let mut prims = Vec::new();
    for (f, chain) in skeleton.finger_chains.iter().enumerate() {
        let sf = &spec.fingers[f];
        let d = up * sf.angle.cos() + right * sf.angle.sin();
        let root = p + d * (0.5 * r_palm);
        let r = 0.5 * sf.width;
        joints[chain[0]] = root;
        let n = chain.len() - 1;
        if sf.stretched {
            let axis = d * sf.elevation.cos() + normal * sf.elevation.sin();
            for (k, &j) in chain.iter().enumerate().skip(1) {
                joints[j] = root + axis * (sf.length * k as f64 / n as f64);
            }
            let end = joints[chain[n]] - axis * (0.75 * r);
            prims.push(Capsule { a: root, b: end, r });
        } else {
            for (k, &j) in chain.iter().enumerate().skip(1) {
                let at = if n == 1 { 2 } else { ((k - 1) as f64 * 2.0 / (n - 1) as f64).round() as usize };
                let (along, lift) = CURL_PATH[at];
                joints[j] = p + d * (along * r_palm) + normal * lift;
            }
            for w in chain.windows(2) {
                prims.push(Capsule {
                    a: joints[w[0]],
                    b: joints[w[1]],
                    r: 0.8 * r,
                });
            }
        }
    }
    let wrist = skeleton.wrist();
    joints[wrist] = if skeleton.name == "icvl16" {
        p
    } else {
        p - up * (0.9 * r_palm)
    };

    let intr = &spec.intrinsics;
    let (w, h) = (spec.width, spec.height);
    let bg = spec.background;
    let n_dot_p = normal.dot(&p.coords);
    let rows: Vec<Vec<f32>> = (0..h)
        .into_par_iter()
        .map(|v| {
            let mut row = vec![bg; w];
            for (u, out) in row.iter_mut().enumerate() {
                let dir = Vector3::new((u as f64 - intr.cx) / intr.fx, (v as f64 - intr.cy) / intr.fy, 1.0).normalize();
                let mut best = f64::INFINITY;
                let nd = normal.dot(&dir);
                if nd.abs() > 1e-9 {
                    let t = n_dot_p / nd;
                    let x = Point3::from(dir * t);
                    let rho2 = (x - p).norm_squared();
                    if t > 0.0 && rho2 < r_palm * r_palm {
                        let lift = spec.palm_bulge * (1.0 - rho2 / (r_palm * r_palm));
                        best = x.z + lift * normal.z;
                    }
                }
                for c in &prims {
                    if let Some(t) = capsule_hit(&dir, &c.a, &c.b, c.r) {
                        if t > 0.0 {
                            best = best.min(t * dir.z);
                        }
                    }
                }
                if best.is_finite() {
                    *out = best as f32;
                }
            }
            row
        })
        .collect();
    let mut depths: Vec<f32> = rows.into_iter().flatten().collect();

    if spec.noise > 0.0 {
        let normal_dist = Normal::new(0.0, spec.noise).map_err(|e| Error::invalid("synthetic hand", e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for d in depths.iter_mut() {
            if *d < bg {
                *d += normal_dist.sample(&mut rng) as f32;
            }
        }
    }

    let image = DepthImage::new(w, h, depths, bg)?;
    let mut clipped = (0..w).any(|u| {
        image.is_foreground(crate::geometry::Pixel::new(u as i32, 0))
            || image.is_foreground(crate::geometry::Pixel::new(u as i32, h as i32 - 1))
    }) || (0..h).any(|v| {
        image.is_foreground(crate::geometry::Pixel::new(0, v as i32))
            || image.is_foreground(crate::geometry::Pixel::new(w as i32 - 1, v as i32))
    });
    for j in &joints {
        let q = project(j, intr)?;
        if q.u < 0.0 || q.v < 0.0 || q.u > (w - 1) as f64 || q.v > (h - 1) as f64 {
            clipped = true;
        }
    }
    if clipped {
        warn!("synthetic hand extends past the {w}x{h} frame; clipped");
    }
    Ok(SynthHand {
        image,
        pose: HandPose::new(joints, skeleton.clone())?,
        stretched: spec.fingers.iter().map(|f| f.stretched).collect(),
        clipped,
    })
}

/// Distribution of random hands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub intrinsics: CameraIntrinsics,
    pub background: f32,
    pub palm_radius: f64,
    pub palm_bulge: f64,
    /// Palm center depth range, mm.
    pub depth_range: [f64; 2],
    /// Palm center position in the image relative to the principal point, px.
    pub center_offset: [f64; 2],
    pub center_jitter_px: f64,
    pub roll_max_deg: f64,
    pub tilt_max_deg: f64,
    pub elevation_max_deg: f64,
    pub angle_jitter_deg: f64,
    /// Relative jitter of finger lengths and palm radius.
    pub size_jitter: f64,
    pub finger_width: f64,
    pub noise: f64,
    /// Numbers of stretched fingers to draw from, uniformly.
    pub stretched_counts: Vec<usize>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 320,
            height: 240,
            intrinsics: CameraIntrinsics::default(),
            background: DEFAULT_BACKGROUND,
            palm_radius: 50.0,
            palm_bulge: 10.0,
            depth_range: [270.0, 340.0],
            center_offset: [0.0, 30.0],
            center_jitter_px: 10.0,
            roll_max_deg: 22.0,
            tilt_max_deg: 8.0,
            elevation_max_deg: 12.0,
            angle_jitter_deg: 3.0,
            size_jitter: 0.06,
            finger_width: 12.0,
            noise: 0.0,
            stretched_counts: vec![1, 2, 3, 4, 5],
        }
    }
}

/// Resting direction (degrees from up) and length (mm) by finger name.
fn anatomy(name: &str) -> (f64, f64) {
    match name {
        "thumb" => (-78.0, 74.0),
        "index" => (-22.0, 86.0),
        "middle" => (0.0, 94.0),
        "ring" => (22.0, 88.0),
        "little" => (44.0, 76.0),
        _ => (0.0, 85.0),
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |r: &str| Err(Error::invalid("synth config", r.to_string()));
        if self.width < 16 || self.height < 16 {
            return bad("frame too small");
        }
        if !(self.depth_range[0] > 0.0 && self.depth_range[0] <= self.depth_range[1]) {
            return bad("depth_range must be positive and ordered");
        }
        if self.stretched_counts.is_empty() || self.stretched_counts.iter().any(|&k| k > 5) {
            return bad("stretched_counts must be non-empty values in 0..=5");
        }
        if !(0.0..0.5).contains(&self.size_jitter) {
            return bad("size_jitter must lie in [0, 0.5)");
        }
        self.intrinsics.validate()
    }

    /// Random hand with exactly `stretched_count` stretched fingers.
    pub fn random_spec<R: Rng + ?Sized>(&self, skeleton: &SkeletonSpec, rng: &mut R, stretched_count: usize) -> SynthHandSpec {
        let nf = skeleton.finger_chains.len();
        let k = stretched_count.min(nf);
        let mut stretched = vec![false; nf];
        for i in sample_indices(rng, nf, k).into_iter() {
            stretched[i] = true;
        }
        let sym = |rng: &mut R, m: f64| if m > 0.0 { rng.gen_range(-m..=m) } else { 0.0 };
        let scale = |rng: &mut R| 1.0 + sym(rng, self.size_jitter);
        let z = rng.gen_range(self.depth_range[0]..=self.depth_range[1]);
        let cu = self.intrinsics.cx + self.center_offset[0] + sym(rng, self.center_jitter_px);
        let cv = self.intrinsics.cy + self.center_offset[1] + sym(rng, self.center_jitter_px);
        let center = self.intrinsics.backproject_uvd(cu, cv, z);
        let palm_radius = self.palm_radius * scale(rng);
        let roll = sym(rng, self.roll_max_deg).to_radians();
        let tilt = [sym(rng, self.tilt_max_deg).to_radians(), sym(rng, self.tilt_max_deg).to_radians()];
        let fingers = (0..nf)
            .map(|f| {
                let (angle, length) = anatomy(&skeleton.finger_names[f]);
                SynthFinger {
                    stretched: stretched[f],
                    angle: (angle + sym(rng, self.angle_jitter_deg)).to_radians(),
                    elevation: sym(rng, self.elevation_max_deg).to_radians(),
                    length: length * scale(rng),
                    width: self.finger_width * scale(rng),
                }
            })
            .collect();
        SynthHandSpec {
            palm_radius,
            palm_bulge: self.palm_bulge,
            center: [center.x, center.y, center.z],
            roll,
            tilt,
            fingers,
            noise: self.noise,
            width: self.width,
            height: self.height,
            intrinsics: self.intrinsics,
            background: self.background,
        }
    }

    /// Hand `index` of the dataset drawn with `seed`; each index has its own stream.
    pub fn sample_hand(&self, skeleton: &Arc<SkeletonSpec>, seed: u64, index: u64) -> Result<SynthHand> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index + 1);
        let k = self.stretched_counts[rng.gen_range(0..self.stretched_counts.len())];
        let spec = self.random_spec(skeleton, &mut rng, k);
        let noise_seed = rng.gen();
        generate_synth(&spec, skeleton, noise_seed)
    }
}

/// `count` random hands as an in-memory dataset; subject ids cycle through
/// `subjects` so leave-one-subject-out splits work on synthetic data too.
pub fn generate_dataset(
    cfg: &SynthConfig,
    skeleton: &Arc<SkeletonSpec>,
    count: usize,
    subjects: u32,
    seed: u64,
) -> Result<DatasetIndex> {
    cfg.validate()?;
    let hands: Vec<SynthHand> = (0..count as u64)
        .into_par_iter()
        .map(|i| cfg.sample_hand(skeleton, seed, i))
        .collect::<Result<_>>()?;
    let clipped = hands.iter().filter(|h| h.clipped).count();
    if clipped > 0 {
        warn!("{clipped} of {count} synthetic hands were clipped by the frame");
    }
    let mut index = DatasetIndex::new(skeleton.clone(), cfg.intrinsics, cfg.background);
    for (i, h) in hands.into_iter().enumerate() {
        index.samples.push(Sample {
            id: format!("synth_{i:06}"),
            source: ImageSource::Memory(Arc::new(h.image)),
            pose: h.pose,
            subject: i as u32 % subjects.max(1),
            gesture: format!("{}", h.stretched.iter().filter(|&&s| s).count()),
            stretched: Some(h.stretched),
        });
    }
    Ok(index)
}
