//! Neighbor-pixel voting refinement of stretched-finger joints.
//!
//! Training labels every foreground pixel of the drawn images with its nearest
//! ground-truth joint (over all joints) and the 3D offset to it; one forest
//! learns that offset. At test time the detected stretched fingers replace
//! their baseline joints by the interpolated estimates (θ⁰). Pixels closer
//! than `distance_threshold` to a θ⁰ joint that is being refined vote for it,
//! and the joint moves to the mean of its votes.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Anchor, FeatureConfig};
use crate::finger_detect::Detection;
use crate::forest::{load_forest, save_forest, train_forest, Forest, ForestConfig, OffsetRegressor, TrainingSet};
use crate::geometry::{CameraIntrinsics, DepthImage, HandPose, Pixel, Point3, SkeletonSpec, Vector3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VotingConfig {
    /// Images drawn from the training set (N).
    pub training_image_count: usize,
    /// Voter radius around a θ⁰ joint, mm.
    pub distance_threshold: f64,
    pub forest: ForestConfig,
    pub features: FeatureConfig,
}

impl Default for VotingConfig {
    fn default() -> Self {
        VotingConfig {
            training_image_count: 10_000,
            distance_threshold: 10.0,
            forest: ForestConfig {
                split_sample_cap: 1000,
                ..ForestConfig::default()
            },
            features: FeatureConfig::voting(),
        }
    }
}

impl VotingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.training_image_count == 0 {
            return Err(Error::invalid("voting config", "training_image_count must be at least 1"));
        }
        if !(self.distance_threshold > 0.0 && self.distance_threshold.is_finite()) {
            return Err(Error::invalid("voting config", "distance_threshold must be positive"));
        }
        self.forest.validate()?;
        self.features.validate()
    }
}

/// One labeled foreground pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VotingSample {
    pub image: usize,
    pub pixel: Pixel,
    /// Nearest ground-truth joint.
    pub joint: usize,
    /// Joint position minus the pixel's 3D point, mm.
    pub offset: [f32; 3],
}

/// One pixel's vote for a joint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vote {
    pub joint: usize,
    pub pixel: Pixel,
    /// Voter 3D position plus the predicted offset, mm.
    pub location: [f64; 3],
}

/// Index and distance of the joint nearest to `p`; the lowest index wins ties.
pub fn nearest_joint(p: &Point3, joints: &[Point3]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, j) in joints.iter().enumerate() {
        let d = (j - p).norm_squared();
        if d < best.1 {
            best = (k, d);
        }
    }
    (best.0, best.1.sqrt())
}

/// Indices of `n` training images out of `len`: without replacement when
/// `len >= n`, otherwise with replacement.
pub fn draw_training_images(len: usize, n: usize, seed: u64) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if len >= n {
        let mut v = index::sample(&mut rng, len, n).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..n).map(|_| rng.gen_range(0..len)).collect()
    }
}

fn backproject_px(intr: &CameraIntrinsics, p: Pixel, d: f32) -> Point3 {
    intr.backproject_uvd(p.u as f64, p.v as f64, d as f64)
}

/// Labels every foreground pixel of every image with its nearest joint.
pub fn collect_training_samples(
    images: &[&DepthImage],
    poses: &[&HandPose],
    intr: &CameraIntrinsics,
) -> Result<Vec<VotingSample>> {
    if images.len() != poses.len() {
        return Err(Error::invalid("voting training", "image and pose counts differ"));
    }
    let per_image: Vec<Vec<VotingSample>> = images
        .par_iter()
        .zip(poses.par_iter())
        .enumerate()
        .map(|(i, (img, pose))| {
            img.foreground_pixels()
                .map(|(p, d)| {
                    let x = backproject_px(intr, p, d);
                    let (k, _) = nearest_joint(&x, &pose.joints);
                    let o = pose.joints[k] - x;
                    VotingSample {
                        image: i,
                        pixel: p,
                        joint: k,
                        offset: [o.x as f32, o.y as f32, o.z as f32],
                    }
                })
                .collect()
        })
        .collect();
    Ok(per_image.into_iter().flatten().collect())
}

pub fn to_training_set(images: &[&DepthImage], samples: &[VotingSample]) -> TrainingSet {
    let mut set = TrainingSet::with_capacity(3, samples.len());
    for s in samples {
        let depth = images[s.image].depth_or_background(s.pixel.u, s.pixel.v);
        set.push(s.image, Anchor { pixel: s.pixel, depth }, &s.offset);
    }
    set
}

pub fn train_voting_forest(
    images: &[&DepthImage],
    samples: &[VotingSample],
    config: &VotingConfig,
    seed: u64,
) -> Result<Forest> {
    config.validate()?;
    let set = to_training_set(images, samples);
    train_forest(images, &set, &config.features, &config.forest, seed)
}

/// Trained voting forest plus what is needed to apply it.
#[derive(Clone, Debug, PartialEq)]
pub struct VotingModel {
    pub skeleton: Arc<SkeletonSpec>,
    pub intrinsics: CameraIntrinsics,
    pub config: VotingConfig,
    pub forest: Forest,
}

/// Draws the training images of `images`/`poses` (already loaded), labels
/// their pixels and trains the forest.
pub fn train_voting(
    images: &[&DepthImage],
    poses: &[&HandPose],
    intrinsics: &CameraIntrinsics,
    config: &VotingConfig,
    seed: u64,
) -> Result<VotingModel> {
    config.validate()?;
    if images.is_empty() {
        return Err(Error::EmptyTraining);
    }
    let drawn = draw_training_images(images.len(), config.training_image_count, seed);
    let imgs: Vec<&DepthImage> = drawn.iter().map(|&i| images[i]).collect();
    let ps: Vec<&HandPose> = drawn.iter().map(|&i| poses[i]).collect();
    let samples = collect_training_samples(&imgs, &ps, intrinsics)?;
    log::info!("voting: {} samples from {} images", samples.len(), imgs.len());
    let forest = train_voting_forest(&imgs, &samples, config, seed ^ 0x5DEE_CE66_D1CE_4E5B)?;
    Ok(VotingModel {
        skeleton: poses[0].skeleton.clone(),
        intrinsics: *intrinsics,
        config: config.clone(),
        forest,
    })
}

/// θ⁰: `baseline` with the non-root joints of every identified finger
/// replaced by the detector's lifted interpolants. Also returns the mask of
/// those replaced joints, which are the ones refinement updates.
pub fn interpolated_pose(baseline: &HandPose, detection: &Detection) -> Result<(HandPose, Vec<bool>)> {
    let sk = &baseline.skeleton;
    let mut theta0 = baseline.clone();
    let mut update = vec![false; sk.joint_count];
    for (f, det) in detection.identified() {
        let chain = sk
            .finger_chains
            .get(f)
            .ok_or_else(|| Error::invalid("detection", format!("finger {f} not in skeleton")))?;
        let pts = det.points_3d();
        if pts.len() != chain.len() {
            return Err(Error::SkeletonMismatch {
                expected: chain.len(),
                found: pts.len(),
            });
        }
        theta0.scatter(&chain[1..], &pts[1..]);
        for &j in &chain[1..] {
            update[j] = true;
        }
    }
    Ok((theta0, update))
}

/// Voters: foreground pixels within `threshold` mm of their nearest θ⁰ joint,
/// when that joint is flagged in `update`. Returned in row-major order as
/// (pixel, 3D position, joint).
pub fn select_voters(
    img: &DepthImage,
    intr: &CameraIntrinsics,
    theta0: &HandPose,
    update: &[bool],
    threshold: f64,
) -> Vec<(Pixel, Point3, usize)> {
    if !update.iter().any(|&u| u) {
        return Vec::new();
    }
    img.foreground_pixels()
        .filter_map(|(p, d)| {
            let x = backproject_px(intr, p, d);
            let (k, dist) = nearest_joint(&x, &theta0.joints);
            (dist < threshold && update[k]).then_some((p, x, k))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Refinement {
    pub pose: HandPose,
    pub theta0: HandPose,
    /// Joints that refinement was allowed to move.
    pub updated: Vec<bool>,
    pub voter_counts: Vec<usize>,
    pub votes: Vec<Vote>,
}

/// Moves every flagged joint of `theta0` to the mean of its votes. Joints
/// without voters keep their θ⁰ value; unflagged joints are copied from
/// `baseline`.
pub fn refine_with_initial<R: OffsetRegressor + ?Sized>(
    img: &DepthImage,
    intr: &CameraIntrinsics,
    baseline: &HandPose,
    theta0: &HandPose,
    update: &[bool],
    regressor: &R,
    threshold: f64,
) -> Refinement {
    let n = baseline.joint_count();
    let voters = select_voters(img, intr, theta0, update, threshold);
    let mut sums = vec![Vector3::zeros(); n];
    let mut counts = vec![0usize; n];
    let mut votes = Vec::with_capacity(voters.len());
    for (p, x, k) in voters {
        let d = img.depth_or_background(p.u, p.v);
        let o = regressor.predict_offset(img, Anchor { pixel: p, depth: d });
        let loc = x + Vector3::new(o[0], o[1], o[2]);
        sums[k] += loc.coords;
        counts[k] += 1;
        votes.push(Vote {
            joint: k,
            pixel: p,
            location: [loc.x, loc.y, loc.z],
        });
    }
    let mut pose = baseline.clone();
    for k in 0..n {
        if update[k] {
            pose.joints[k] = if counts[k] > 0 {
                Point3::from(sums[k] / counts[k] as f64)
            } else {
                theta0.joints[k]
            };
        }
    }
    Refinement {
        pose,
        theta0: theta0.clone(),
        updated: update.to_vec(),
        voter_counts: counts,
        votes,
    }
}

/// Refines the identified fingers of `detection` starting from `baseline`.
pub fn refine<R: OffsetRegressor + ?Sized>(
    img: &DepthImage,
    intr: &CameraIntrinsics,
    baseline: &HandPose,
    detection: &Detection,
    regressor: &R,
    threshold: f64,
) -> Result<Refinement> {
    let (theta0, update) = interpolated_pose(baseline, detection)?;
    Ok(refine_with_initial(img, intr, baseline, &theta0, &update, regressor, threshold))
}

pub const VOTING_BUNDLE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct VotingManifest {
    kind: String,
    format_version: u32,
    forest: String,
    skeleton: SkeletonSpec,
    intrinsics: CameraIntrinsics,
    config: VotingConfig,
}

/// Writes `manifest.toml` and `voting.hpf` into `dir`.
pub fn save_voting(model: &VotingModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_forest(&model.forest, dir.join("voting.hpf"))?;
    let manifest = VotingManifest {
        kind: "voting".into(),
        format_version: VOTING_BUNDLE_VERSION,
        forest: "voting.hpf".into(),
        skeleton: (*model.skeleton).clone(),
        intrinsics: model.intrinsics,
        config: model.config.clone(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    let path = dir.join("manifest.toml");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn load_voting(dir: &Path) -> Result<VotingModel> {
    let path = dir.join("manifest.toml");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: VotingManifest = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.clone(),
        line: 0,
        reason: e.to_string(),
    })?;
    if m.kind != "voting" {
        return Err(Error::invalid("voting bundle", format!("manifest kind is {:?}", m.kind)));
    }
    if m.format_version != VOTING_BUNDLE_VERSION {
        return Err(Error::Version {
            found: m.format_version,
            expected: VOTING_BUNDLE_VERSION,
        });
    }
    m.skeleton.validate()?;
    let forest = load_forest(dir.join(&m.forest))?;
    if forest.dim() != 3 {
        return Err(Error::invalid("voting bundle", "forest must predict 3D offsets"));
    }
    Ok(VotingModel {
        skeleton: Arc::new(m.skeleton),
        intrinsics: m.intrinsics,
        config: m.config,
        forest,
    })
}
