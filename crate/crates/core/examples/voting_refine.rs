//! Trains a small cascade and voting forest, then refines held-out hands and
//! shows what the voting stage changed.
//!
//!     cargo run --release --example voting_refine -- [train] [test]

use std::sync::Arc;

use handpose::cascade::{train_cascade, CascadeConfig};
use handpose::data::synth::{generate_dataset, SynthConfig};
use handpose::finger_detect::DetectConfig;
use handpose::forest::ForestConfig;
use handpose::geometry::{DepthImage, HandPose, SkeletonSpec};
use handpose::pipeline::Pipeline;
use handpose::voting::{train_voting, VotingConfig};

fn main() -> handpose::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (n_train, n_test) = (args.first().copied().unwrap_or(300), args.get(1).copied().unwrap_or(5));

    let sk = Arc::new(SkeletonSpec::msra21());
    let sc = SynthConfig::default();
    let train = generate_dataset(&sc, &sk, n_train, 1, 20)?;
    let test = generate_dataset(&sc, &sk, n_test, 1, 21)?;
    let images: Vec<DepthImage> = (0..train.len()).map(|i| train.load_image(i)).collect::<Result<_, _>>()?;
    let refs: Vec<&DepthImage> = images.iter().collect();
    let poses: Vec<&HandPose> = train.samples.iter().map(|s| &s.pose).collect();

    let forest = ForestConfig {
        tree_count: 3,
        max_depth: 12,
        split_sample_cap: 1000,
        ..ForestConfig::default()
    };
    let cascade = train_cascade(&refs, &poses, &train.intrinsics, &CascadeConfig { forest, ..CascadeConfig::default() }, 1)?.model;
    let vc = VotingConfig {
        training_image_count: n_train,
        forest,
        ..VotingConfig::default()
    };
    let voting = train_voting(&refs, &poses, &train.intrinsics, &vc, 2)?;
    let pipe = Pipeline::new(cascade, voting, DetectConfig::default())?;

    for (i, s) in test.samples.iter().enumerate() {
        let est = pipe.run(&test.load_image(i)?)?;
        let r = &est.refinement;
        println!("{} ({:.1} ms)", s.id, est.timings.total().as_secs_f64() * 1e3);
        for (f, chain) in sk.finger_chains.iter().enumerate() {
            let tip = *chain.last().unwrap();
            if !r.updated[tip] {
                continue;
            }
            let err = |p: &HandPose| (p.joints[tip] - s.pose.joints[tip]).norm();
            println!(
                "    {:<7} tip error {:5.1} -> {:5.1} mm ({} voters)",
                sk.finger_names[f],
                err(&est.baseline),
                err(&r.pose),
                r.voter_counts[tip]
            );
        }
    }
    Ok(())
}
