//! Trains the palm and finger cascade on synthetic hands and reports the
//! per-stage training error and the held-out joint error.
//!
//!     cargo run --release --example cascade_baseline -- [train] [test]

use std::sync::Arc;

use handpose::cascade::{train_cascade, CascadeConfig};
use handpose::data::synth::{generate_dataset, SynthConfig};
use handpose::eval::mean_joint_error;
use handpose::forest::ForestConfig;
use handpose::geometry::{DepthImage, HandPose, SkeletonSpec};

fn main() -> handpose::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (n_train, n_test) = (args.first().copied().unwrap_or(300), args.get(1).copied().unwrap_or(50));

    let sk = Arc::new(SkeletonSpec::msra21());
    let sc = SynthConfig::default();
    let train = generate_dataset(&sc, &sk, n_train, 1, 10)?;
    let test = generate_dataset(&sc, &sk, n_test, 1, 11)?;
    let images: Vec<DepthImage> = (0..train.len()).map(|i| train.load_image(i)).collect::<Result<_, _>>()?;
    let refs: Vec<&DepthImage> = images.iter().collect();
    let poses: Vec<&HandPose> = train.samples.iter().map(|s| &s.pose).collect();

    let cfg = CascadeConfig {
        forest: ForestConfig {
            tree_count: 3,
            max_depth: 10,
            ..ForestConfig::default()
        },
        ..CascadeConfig::default()
    };
    let trained = train_cascade(&refs, &poses, &train.intrinsics, &cfg, 1)?;
    for e in &trained.stage_errors {
        println!("{:<16} {:6.2} -> {:6.2} mm", e.stage, e.before, e.after);
    }

    let model = trained.model;
    let mut init = Vec::new();
    let mut pred = Vec::new();
    for i in 0..test.len() {
        let img = test.load_image(i)?;
        init.push(model.initial_pose(&img)?);
        pred.push(model.predict(&img)?);
    }
    let truth: Vec<HandPose> = test.samples.iter().map(|s| s.pose.clone()).collect();
    println!("held-out mean joint error: initial {:.2} mm, cascade {:.2} mm", mean_joint_error(&init, &truth)?.1, mean_joint_error(&pred, &truth)?.1);
    Ok(())
}
