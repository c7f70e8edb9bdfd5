//! Cascaded hierarchical pose regression (the baseline).
//!
//! Palm joints are regressed first, in `palm_stage_count` stages, each stage
//! a forest that predicts the remaining palm residual from features anchored
//! at the current palm joint estimates. With the palm fixed, each finger is
//! initialized along the wrist→middle-root direction and refined by its own
//! `finger_stage_count` stages the same way.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Anchor, FeatureConfig};
use crate::forest::{load_forest, save_forest, train_forest, Forest, ForestConfig, TrainingSet};
use crate::geometry::{project, CameraIntrinsics, DepthImage, HandPose, Pixel, Point3, SkeletonSpec, Vector3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CascadeConfig {
    pub palm_stage_count: usize,
    pub finger_stage_count: usize,
    pub forest: ForestConfig,
    pub features: FeatureConfig,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            palm_stage_count: 3,
            finger_stage_count: 3,
            forest: ForestConfig::default(),
            features: FeatureConfig::cascade(),
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.palm_stage_count == 0 || self.finger_stage_count == 0 {
            return Err(Error::invalid("cascade config", "stage counts must be at least 1"));
        }
        self.forest.validate()?;
        self.features.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeModel {
    pub skeleton: Arc<SkeletonSpec>,
    pub intrinsics: CameraIntrinsics,
    pub config: CascadeConfig,
    /// Mean ground-truth palm joints, in `skeleton.palm_joints` order.
    pub mean_palm: Vec<Point3>,
    /// Mean foreground point-cloud centroid over the training images.
    pub mean_centroid: Point3,
    /// Mean ground-truth segment lengths per finger, root outward.
    pub phalanx_lengths: Vec<Vec<f64>>,
    pub palm_forests: Vec<Forest>,
    /// `finger_forests[f][t]`: finger `f`, stage `t`.
    pub finger_forests: Vec<Vec<Forest>>,
}

/// Mean per-joint error of one stage's joints on the training set, before
/// and after the stage's update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub before: f64,
    pub after: f64,
}

#[derive(Clone, Debug)]
pub struct CascadeTraining {
    pub model: CascadeModel,
    pub stage_errors: Vec<StageError>,
}

/// Mean of the backprojected foreground pixels.
pub fn cloud_centroid(img: &DepthImage, intr: &CameraIntrinsics) -> Result<Point3> {
    let mut sum = Vector3::zeros();
    let mut n = 0usize;
    for (p, d) in img.foreground_pixels() {
        sum += intr.backproject_uvd(p.u as f64, p.v as f64, d as f64).coords;
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoHand);
    }
    Ok(Point3::from(sum / n as f64))
}

/// Per-joint mean of the palm joints of `poses`.
pub fn init_palm_pose(poses: &[&HandPose], skeleton: &SkeletonSpec) -> Result<Vec<Point3>> {
    if poses.is_empty() {
        return Err(Error::EmptyTraining);
    }
    let mut mean = vec![Vector3::zeros(); skeleton.palm_joints.len()];
    for p in poses {
        for (m, &j) in mean.iter_mut().zip(&skeleton.palm_joints) {
            *m += p.joints[j].coords;
        }
    }
    Ok(mean.into_iter().map(|m| Point3::from(m / poses.len() as f64)).collect())
}

/// Mean length of every finger segment over `poses`.
pub fn mean_phalanx_lengths(poses: &[&HandPose], skeleton: &SkeletonSpec) -> Result<Vec<Vec<f64>>> {
    if poses.is_empty() {
        return Err(Error::EmptyTraining);
    }
    Ok(skeleton
        .finger_chains
        .iter()
        .map(|chain| {
            chain
                .windows(2)
                .map(|w| poses.iter().map(|p| (p.joints[w[1]] - p.joints[w[0]]).norm()).sum::<f64>() / poses.len() as f64)
                .collect()
        })
        .collect())
}

/// Non-root joints of every finger, laid out from the finger's root along
/// the wrist→middle-root direction with the given segment lengths.
pub fn init_finger_poses(pose: &HandPose, lengths: &[Vec<f64>]) -> Result<Vec<Vec<Point3>>> {
    let sk = &pose.skeleton;
    let dir = pose.joints[sk.finger_root(sk.middle_finger())] - pose.joints[sk.wrist()];
    let norm = dir.norm();
    if !(norm > 1e-9) {
        return Err(Error::DegeneratePose("wrist and middle finger root coincide".into()));
    }
    let dir = dir / norm;
    Ok(sk
        .finger_chains
        .iter()
        .zip(lengths)
        .map(|(chain, segs)| {
            let mut at = pose.joints[chain[0]];
            segs.iter()
                .map(|s| {
                    at += dir * *s;
                    at
                })
                .collect()
        })
        .collect())
}

/// Feature anchor at a joint estimate: its projection clamped into the image,
/// scaled by the estimate's depth.
pub fn joint_anchor(img: &DepthImage, intr: &CameraIntrinsics, p: &Point3) -> Anchor {
    let q = project(p, intr).unwrap_or(crate::geometry::ImagePoint { u: intr.cx, v: intr.cy });
    let clamp = |x: f64, hi: usize| {
        if x.is_finite() {
            (x.round() as i64).clamp(0, hi as i64 - 1) as i32
        } else {
            0
        }
    };
    Anchor {
        pixel: Pixel::new(clamp(q.u, img.width()), clamp(q.v, img.height())),
        depth: if p.z > 1.0 { p.z as f32 } else { 1.0 },
    }
}

/// Mean forest prediction over anchors at `joints`.
fn group_prediction(forest: &Forest, img: &DepthImage, intr: &CameraIntrinsics, joints: &[Point3]) -> Vec<f64> {
    let mut acc = vec![0.0; forest.dim()];
    let mut buf = vec![0.0; forest.dim()];
    for p in joints {
        forest.predict_into(img, joint_anchor(img, intr, p), &mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b;
        }
    }
    acc.iter_mut().for_each(|a| *a /= joints.len() as f64);
    acc
}

fn apply_update(joints: &mut [Point3], delta: &[f64]) {
    for (p, d) in joints.iter_mut().zip(delta.chunks_exact(3)) {
        *p += Vector3::new(d[0], d[1], d[2]);
    }
}

fn mean_error(current: &[Vec<Point3>], truth: &[Vec<Point3>]) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for (c, t) in current.iter().zip(truth) {
        for (a, b) in c.iter().zip(t) {
            s += (a - b).norm();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn forest_seed(seed: u64, k: u64) -> u64 {
    seed ^ (k.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One cascade stage over a joint group: trains on the residuals of
/// `current` against `truth`, then moves `current` by the stage's predictions.
#[allow(clippy::too_many_arguments)]
fn run_stage(
    name: String,
    images: &[&DepthImage],
    intr: &CameraIntrinsics,
    current: &mut [Vec<Point3>],
    truth: &[Vec<Point3>],
    config: &CascadeConfig,
    seed: u64,
) -> Result<(Forest, StageError)> {
    let dim = 3 * truth[0].len();
    let mut set = TrainingSet::with_capacity(dim, images.len() * truth[0].len());
    let mut target = vec![0f32; dim];
    for (i, (cur, gt)) in current.iter().zip(truth).enumerate() {
        for (k, (c, g)) in cur.iter().zip(gt).enumerate() {
            let r = g - c;
            target[3 * k..3 * k + 3].copy_from_slice(&[r.x as f32, r.y as f32, r.z as f32]);
        }
        for c in cur.iter() {
            set.push(i, joint_anchor(images[i], intr, c), &target);
        }
    }
    let before = mean_error(current, truth);
    let forest = train_forest(images, &set, &config.features, &config.forest, seed)?;
    let deltas: Vec<Vec<f64>> = current
        .par_iter()
        .enumerate()
        .map(|(i, cur)| group_prediction(&forest, images[i], intr, cur))
        .collect();
    for (cur, d) in current.iter_mut().zip(&deltas) {
        apply_update(cur, d);
    }
    let after = mean_error(current, truth);
    info!("{name}: training error {before:.2} -> {after:.2} mm");
    Ok((forest, StageError { stage: name, before, after }))
}

fn palm_start(mean_palm: &[Point3], mean_centroid: &Point3, centroid: &Point3) -> Vec<Point3> {
    let shift = centroid - mean_centroid;
    mean_palm.iter().map(|p| p + shift).collect()
}

pub fn train_cascade(
    images: &[&DepthImage],
    poses: &[&HandPose],
    intrinsics: &CameraIntrinsics,
    config: &CascadeConfig,
    seed: u64,
) -> Result<CascadeTraining> {
    config.validate()?;
    if images.is_empty() {
        return Err(Error::EmptyTraining);
    }
    if images.len() != poses.len() {
        return Err(Error::invalid("cascade training", "image and pose counts differ"));
    }
    let skeleton = poses[0].skeleton.clone();
    for (i, p) in poses.iter().enumerate() {
        if p.skeleton != skeleton {
            return Err(Error::Data {
                sample: i.to_string(),
                reason: "pose skeleton differs from the first sample".into(),
            });
        }
        if p.joints.iter().any(|j| !j.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::Data {
                sample: i.to_string(),
                reason: "non-finite joint".into(),
            });
        }
    }
    let centroids: Vec<Point3> = images
        .par_iter()
        .map(|img| cloud_centroid(img, intrinsics))
        .collect::<Result<_>>()?;
    let mean_palm = init_palm_pose(poses, &skeleton)?;
    let mean_centroid = Point3::from(centroids.iter().map(|c| c.coords).sum::<Vector3>() / centroids.len() as f64);
    let phalanx_lengths = mean_phalanx_lengths(poses, &skeleton)?;

    let mut stage_errors = Vec::new();
    let mut forest_index = 0u64;

    let palm_truth: Vec<Vec<Point3>> = poses.iter().map(|p| p.gather(&skeleton.palm_joints)).collect();
    let mut palm: Vec<Vec<Point3>> = centroids.iter().map(|c| palm_start(&mean_palm, &mean_centroid, c)).collect();
    let mut palm_forests = Vec::new();
    for t in 0..config.palm_stage_count {
        let (f, e) = run_stage(
            format!("palm stage {}", t + 1),
            images,
            intrinsics,
            &mut palm,
            &palm_truth,
            config,
            forest_seed(seed, forest_index),
        )?;
        forest_index += 1;
        palm_forests.push(f);
        stage_errors.push(e);
    }

    // finger initialization from the final palm estimates
    let mut fingers: Vec<Vec<Vec<Point3>>> = Vec::with_capacity(images.len());
    for (i, p) in palm.iter().enumerate() {
        let mut pose = poses[i].clone();
        pose.scatter(&skeleton.palm_joints, p);
        fingers.push(init_finger_poses(&pose, &phalanx_lengths)?);
    }
    let mut finger_forests = Vec::new();
    for (f, chain) in skeleton.finger_chains.iter().enumerate() {
        let truth: Vec<Vec<Point3>> = poses.iter().map(|p| p.gather(&chain[1..])).collect();
        let mut current: Vec<Vec<Point3>> = fingers.iter().map(|fs| fs[f].clone()).collect();
        let mut stages = Vec::new();
        for t in 0..config.finger_stage_count {
            let (forest, e) = run_stage(
                format!("{} stage {}", skeleton.finger_names[f], t + 1),
                images,
                intrinsics,
                &mut current,
                &truth,
                config,
                forest_seed(seed, forest_index),
            )?;
            forest_index += 1;
            stages.push(forest);
            stage_errors.push(e);
        }
        finger_forests.push(stages);
    }

    Ok(CascadeTraining {
        model: CascadeModel {
            skeleton,
            intrinsics: *intrinsics,
            config: config.clone(),
            mean_palm,
            mean_centroid,
            phalanx_lengths,
            palm_forests,
            finger_forests,
        },
        stage_errors,
    })
}

impl CascadeModel {
    /// Pose before any stage: translated mean palm plus the initial fingers.
    pub fn initial_pose(&self, img: &DepthImage) -> Result<HandPose> {
        let c = cloud_centroid(img, &self.intrinsics)?;
        let sk = &self.skeleton;
        let mut pose = HandPose::new(vec![Point3::origin(); sk.joint_count], sk.clone())?;
        pose.scatter(&sk.palm_joints, &palm_start(&self.mean_palm, &self.mean_centroid, &c));
        let fingers = init_finger_poses(&pose, &self.phalanx_lengths)?;
        for (chain, f) in sk.finger_chains.iter().zip(&fingers) {
            pose.scatter(&chain[1..], f);
        }
        Ok(pose)
    }

    /// Baseline pose estimate for one image.
    pub fn predict(&self, img: &DepthImage) -> Result<HandPose> {
        let sk = &self.skeleton;
        let intr = &self.intrinsics;
        let c = cloud_centroid(img, intr)?;
        let mut palm = palm_start(&self.mean_palm, &self.mean_centroid, &c);
        for forest in &self.palm_forests {
            let d = group_prediction(forest, img, intr, &palm);
            apply_update(&mut palm, &d);
        }
        let mut pose = HandPose::new(vec![Point3::origin(); sk.joint_count], sk.clone())?;
        pose.scatter(&sk.palm_joints, &palm);
        let fingers = init_finger_poses(&pose, &self.phalanx_lengths)?;
        for ((chain, mut joints), stages) in sk.finger_chains.iter().zip(fingers).zip(&self.finger_forests) {
            for forest in stages {
                let d = group_prediction(forest, img, intr, &joints);
                apply_update(&mut joints, &d);
            }
            pose.scatter(&chain[1..], &joints);
        }
        if pose.joints.iter().any(|j| !j.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::DegeneratePose("cascade produced a non-finite joint".into()));
        }
        Ok(pose)
    }
}

pub fn predict_cascade(model: &CascadeModel, img: &DepthImage) -> Result<HandPose> {
    model.predict(img)
}

pub const CASCADE_BUNDLE_VERSION: u32 = 1;

/// `manifest.toml` of a cascade bundle directory.
#[derive(Serialize, Deserialize)]
struct CascadeManifest {
    kind: String,
    format_version: u32,
    mean_palm_pose: Vec<[f64; 3]>,
    mean_centroid: [f64; 3],
    phalanx_lengths: Vec<Vec<f64>>,
    palm_forests: Vec<String>,
    finger_forests: Vec<Vec<String>>,
    skeleton: SkeletonSpec,
    intrinsics: CameraIntrinsics,
    config: CascadeConfig,
}

fn xyz(p: &Point3) -> [f64; 3] {
    [p.x, p.y, p.z]
}

/// Writes the bundle: `manifest.toml`, `palm_stage_<t>.hpf` and
/// `finger_<f>_stage_<t>.hpf` (stages counted from 1).
pub fn save_cascade(model: &CascadeModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut palm_files = Vec::new();
    for (t, f) in model.palm_forests.iter().enumerate() {
        let name = format!("palm_stage_{}.hpf", t + 1);
        save_forest(f, dir.join(&name))?;
        palm_files.push(name);
    }
    let mut finger_files = Vec::new();
    for (fi, stages) in model.finger_forests.iter().enumerate() {
        let mut names = Vec::new();
        for (t, f) in stages.iter().enumerate() {
            let name = format!("finger_{}_stage_{}.hpf", fi, t + 1);
            save_forest(f, dir.join(&name))?;
            names.push(name);
        }
        finger_files.push(names);
    }
    let manifest = CascadeManifest {
        kind: "cascade".into(),
        format_version: CASCADE_BUNDLE_VERSION,
        mean_palm_pose: model.mean_palm.iter().map(xyz).collect(),
        mean_centroid: xyz(&model.mean_centroid),
        phalanx_lengths: model.phalanx_lengths.clone(),
        palm_forests: palm_files,
        finger_forests: finger_files,
        skeleton: (*model.skeleton).clone(),
        intrinsics: model.intrinsics,
        config: model.config.clone(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    let path = dir.join("manifest.toml");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn load_cascade(dir: &Path) -> Result<CascadeModel> {
    let path = dir.join("manifest.toml");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: CascadeManifest = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.clone(),
        line: 0,
        reason: e.to_string(),
    })?;
    if m.kind != "cascade" {
        return Err(Error::invalid("cascade bundle", format!("manifest kind is {:?}", m.kind)));
    }
    if m.format_version != CASCADE_BUNDLE_VERSION {
        return Err(Error::Version {
            found: m.format_version,
            expected: CASCADE_BUNDLE_VERSION,
        });
    }
    m.skeleton.validate()?;
    let sk = Arc::new(m.skeleton);
    if m.mean_palm_pose.len() != sk.palm_joints.len() || m.finger_forests.len() != sk.finger_chains.len() {
        return Err(Error::invalid("cascade bundle", "manifest shapes do not match the skeleton"));
    }
    let palm_forests = m
        .palm_forests
        .iter()
        .map(|n| load_forest(dir.join(n)))
        .collect::<Result<Vec<_>>>()?;
    let finger_forests = m
        .finger_forests
        .iter()
        .map(|names| names.iter().map(|n| load_forest(dir.join(n))).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let to_p = |a: &[f64; 3]| Point3::new(a[0], a[1], a[2]);
    Ok(CascadeModel {
        skeleton: sk,
        intrinsics: m.intrinsics,
        config: m.config,
        mean_palm: m.mean_palm_pose.iter().map(to_p).collect(),
        mean_centroid: to_p(&m.mean_centroid),
        phalanx_lengths: m.phalanx_lengths,
        palm_forests,
        finger_forests,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{generate_dataset, SynthConfig};
    use crate::geometry::DEFAULT_BACKGROUND;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn msra() -> Arc<SkeletonSpec> {
        Arc::new(SkeletonSpec::msra21())
    }

    fn random_pose(rng: &mut ChaCha8Rng, sk: &Arc<SkeletonSpec>) -> HandPose {
        let joints = (0..sk.joint_count)
            .map(|_| Point3::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), rng.gen_range(250.0..350.0)))
            .collect();
        HandPose::new(joints, sk.clone()).unwrap()
    }

    fn small_config() -> CascadeConfig {
        CascadeConfig {
            forest: ForestConfig {
                tree_count: 2,
                max_depth: 8,
                features_per_split: 30,
                thresholds_per_feature: 10,
                ..ForestConfig::default()
            },
            ..CascadeConfig::default()
        }
    }

    #[test]
    fn palm_mean_examples() {
        let sk = msra();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_pose(&mut rng, &sk);
        assert_eq!(init_palm_pose(&[&a], &sk).unwrap(), a.gather(&sk.palm_joints));

        let mut b = a.clone();
        for j in b.joints.iter_mut() {
            *j = Point3::from(-j.coords);
        }
        let m = init_palm_pose(&[&a, &b], &sk).unwrap();
        assert!(m.iter().all(|p| p.coords.norm() < 1e-12));

        let poses: Vec<HandPose> = (0..100).map(|_| random_pose(&mut rng, &sk)).collect();
        let refs: Vec<&HandPose> = poses.iter().collect();
        let m = init_palm_pose(&refs, &sk).unwrap();
        for (k, &j) in sk.palm_joints.iter().enumerate() {
            let (mut x, mut y, mut z) = (0.0, 0.0, 0.0);
            for p in &poses {
                x += p.joints[j].x;
                y += p.joints[j].y;
                z += p.joints[j].z;
            }
            assert!((m[k].x - x / 100.0).abs() < 1e-9);
            assert!((m[k].y - y / 100.0).abs() < 1e-9);
            assert!((m[k].z - z / 100.0).abs() < 1e-9);
        }
        assert!(init_palm_pose(&[], &sk).is_err());
    }

    #[test]
    fn fingers_extend_along_wrist_to_middle() {
        let sk = msra();
        let mut pose = HandPose::new(vec![Point3::origin(); 21], sk.clone()).unwrap();
        pose.joints[0] = Point3::new(0.0, 0.0, 0.0);
        for (f, x) in [(0usize, -20.0), (1, 0.0), (2, 20.0), (3, 40.0), (4, -40.0)] {
            pose.joints[sk.finger_root(f)] = Point3::new(x, -10.0, 0.0);
        }
        let lengths = vec![vec![15.0; 3]; 5];
        let fingers = init_finger_poses(&pose, &lengths).unwrap();
        for (f, joints) in fingers.iter().enumerate() {
            let root = pose.joints[sk.finger_root(f)];
            for (k, p) in joints.iter().enumerate() {
                let expect = root + Vector3::new(0.0, -1.0, 0.0) * (15.0 * (k + 1) as f64);
                assert!((p - expect).norm() < 1e-12);
                assert!((p - root).cross(&Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-9);
            }
        }
        pose.joints[0] = pose.joints[sk.finger_root(1)];
        assert!(matches!(init_finger_poses(&pose, &lengths), Err(Error::DegeneratePose(_))));
    }

    #[test]
    fn zero_forests_return_initialization() {
        let sk = msra();
        let idx = generate_dataset(&SynthConfig::default(), &sk, 4, 1, 3).unwrap();
        let img = idx.load_image(0).unwrap();
        let zero = |dim| Forest::constant(vec![0.0; dim], FeatureConfig::cascade());
        let poses: Vec<&HandPose> = idx.samples.iter().map(|s| &s.pose).collect();
        let model = CascadeModel {
            skeleton: sk.clone(),
            intrinsics: idx.intrinsics,
            config: CascadeConfig::default(),
            mean_palm: init_palm_pose(&poses, &sk).unwrap(),
            mean_centroid: cloud_centroid(&img, &idx.intrinsics).unwrap(),
            phalanx_lengths: mean_phalanx_lengths(&poses, &sk).unwrap(),
            palm_forests: vec![zero(18); 3],
            finger_forests: vec![vec![zero(9); 3]; 5],
        };
        assert_eq!(model.predict(&img).unwrap(), model.initial_pose(&img).unwrap());

        // a constant palm forest moves every palm joint by its value; fingers keep
        // their offsets from the palm
        let mut shifted = model.clone();
        let step: Vec<f64> = (0..6).flat_map(|_| [1.0, -2.0, 0.5]).collect();
        shifted.palm_forests[0] = Forest::constant(step, FeatureConfig::cascade());
        let a = model.predict(&img).unwrap();
        let b = shifted.predict(&img).unwrap();
        for (p, q) in a.joints.iter().zip(&b.joints) {
            assert!((q - p - Vector3::new(1.0, -2.0, 0.5)).norm() < 1e-9);
        }
        let empty = DepthImage::filled(320, 240, DEFAULT_BACKGROUND);
        assert!(matches!(model.predict(&empty), Err(Error::NoHand)));
    }

    #[test]
    fn finger_stages_leave_palm_alone() {
        let sk = msra();
        let idx = generate_dataset(&SynthConfig::default(), &sk, 30, 1, 5).unwrap();
        let images: Vec<DepthImage> = (0..idx.len()).map(|i| idx.load_image(i).unwrap()).collect();
        let refs: Vec<&DepthImage> = images.iter().collect();
        let poses: Vec<&HandPose> = idx.samples.iter().map(|s| &s.pose).collect();
        let trained = train_cascade(&refs, &poses, &idx.intrinsics, &small_config(), 7).unwrap();
        let model = &trained.model;
        assert_eq!(model.palm_forests.len(), 3);
        assert_eq!(model.finger_forests.iter().map(|s| s.len()).sum::<usize>(), 15);

        let mut no_fingers = model.clone();
        for stages in no_fingers.finger_forests.iter_mut() {
            for f in stages.iter_mut() {
                *f = Forest::constant(vec![0.0; 9], FeatureConfig::cascade());
            }
        }
        for img in &images[..5] {
            let a = model.predict(img).unwrap();
            let b = no_fingers.predict(img).unwrap();
            for &j in &sk.palm_joints {
                assert_eq!(a.joints[j], b.joints[j]);
            }
        }
        // each stage reduces its own training error
        for e in &trained.stage_errors {
            assert!(e.after <= e.before + 1e-9, "{e:?}");
        }
    }

    #[test]
    fn single_image_is_memorized() {
        let sk = msra();
        let idx = generate_dataset(&SynthConfig::default(), &sk, 1, 1, 11).unwrap();
        let img = idx.load_image(0).unwrap();
        let cfg = CascadeConfig {
            forest: ForestConfig {
                tree_count: 1,
                max_depth: 4,
                features_per_split: 10,
                thresholds_per_feature: 5,
                min_samples_leaf: 1,
                ..ForestConfig::default()
            },
            ..CascadeConfig::default()
        };
        let trained = train_cascade(&[&img], &[&idx.samples[0].pose], &idx.intrinsics, &cfg, 1).unwrap();
        let pred = trained.model.predict(&img).unwrap();
        for (p, g) in pred.joints.iter().zip(&idx.samples[0].pose.joints) {
            assert!((p - g).norm() < 1.0, "{}", (p - g).norm());
        }
    }

    #[test]
    fn bundle_round_trip() {
        let sk = msra();
        let idx = generate_dataset(&SynthConfig::default(), &sk, 12, 1, 2).unwrap();
        let images: Vec<DepthImage> = (0..idx.len()).map(|i| idx.load_image(i).unwrap()).collect();
        let refs: Vec<&DepthImage> = images.iter().collect();
        let poses: Vec<&HandPose> = idx.samples.iter().map(|s| &s.pose).collect();
        let model = train_cascade(&refs, &poses, &idx.intrinsics, &small_config(), 3).unwrap().model;
        let dir = tempfile::tempdir().unwrap();
        save_cascade(&model, dir.path()).unwrap();
        assert!(dir.path().join("finger_4_stage_3.hpf").exists());
        let back = load_cascade(dir.path()).unwrap();
        assert_eq!(back, model);
        for img in &images {
            assert_eq!(back.predict(img).unwrap(), model.predict(img).unwrap());
        }
    }
}
