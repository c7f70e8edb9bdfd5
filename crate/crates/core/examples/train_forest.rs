//! Trains a small regression forest that predicts the offset from a hand
//! pixel to the wrist, then saves and reloads it.
//!
//!     cargo run --release --example train_forest

use std::sync::Arc;

use handpose::data::synth::{generate_dataset, SynthConfig};
use handpose::features::{Anchor, FeatureConfig};
use handpose::forest::{load_forest, save_forest, train_forest, ForestConfig, TrainingSet};
use handpose::geometry::{DepthImage, SkeletonSpec};

fn main() -> handpose::Result<()> {
    let sk = Arc::new(SkeletonSpec::msra21());
    let data = generate_dataset(&SynthConfig::default(), &sk, 60, 1, 3)?;
    let images: Vec<DepthImage> = (0..data.len()).map(|i| data.load_image(i)).collect::<Result<_, _>>()?;
    let intr = data.intrinsics;

    let mut set = TrainingSet::new(3);
    for (i, (img, s)) in images.iter().zip(&data.samples).enumerate() {
        for (pixel, depth) in img.foreground_pixels().step_by(10) {
            let x = intr.backproject_uvd(pixel.u as f64, pixel.v as f64, depth as f64);
            let o = s.pose.joints[0] - x;
            set.push(i, Anchor { pixel, depth }, &[o.x as f32, o.y as f32, o.z as f32]);
        }
    }
    let (train, test) = (&images[..50], &images[50..]);
    let refs: Vec<&DepthImage> = images.iter().collect();
    let cfg = ForestConfig {
        tree_count: 4,
        max_depth: 12,
        ..ForestConfig::default()
    };
    // samples from the last ten images are held out by dropping them from training
    let mut train_set = TrainingSet::new(3);
    let mut test_idx = Vec::new();
    for k in 0..set.len() {
        if set.image(k) < train.len() {
            train_set.push(set.image(k), set.anchor(k), set.target(k));
        } else {
            test_idx.push(k);
        }
    }
    println!("training on {} samples", train_set.len());
    let forest = train_forest(&refs, &train_set, &FeatureConfig::voting(), &cfg, 42)?;
    for (t, tree) in forest.trees().iter().enumerate() {
        println!("tree {t}: {} leaves, depth {}", tree.leaf_count(), tree.depth());
    }

    let (mut err, mut zero) = (0.0, 0.0);
    for &k in &test_idx {
        let p = forest.predict_anchor(refs[set.image(k)], set.anchor(k));
        let t = set.target(k);
        err += (0..3).map(|d| (p[d] - t[d] as f64).powi(2)).sum::<f64>().sqrt();
        zero += (0..3).map(|d| (t[d] as f64).powi(2)).sum::<f64>().sqrt();
    }
    let n = test_idx.len() as f64;
    println!("held-out offset error {:.1} mm (predicting zero: {:.1} mm) over {} images", err / n, zero / n, test.len());

    let path = std::env::temp_dir().join("wrist_offsets.hpf");
    save_forest(&forest, &path)?;
    assert_eq!(load_forest(&path)?, forest);
    println!("saved and reloaded {}", path.display());
    Ok(())
}
