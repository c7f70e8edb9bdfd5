//! Scores baseline and refined predictions and writes the CSV, JSON and text
//! reports plus overlay images.
//!
//!     cargo run --release --example evaluate_report -- [out_dir]

use std::path::PathBuf;
use std::sync::Arc;

use handpose::cascade::{train_cascade, CascadeConfig};
use handpose::data::synth::{generate_dataset, SynthConfig};
use handpose::eval::{evaluate, format_table, write_csv, write_json, write_overlay};
use handpose::finger_detect::DetectConfig;
use handpose::forest::ForestConfig;
use handpose::geometry::{DepthImage, HandPose, SkeletonSpec};
use handpose::pipeline::Pipeline;
use handpose::voting::{train_voting, VotingConfig};

fn main() -> handpose::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "eval_report".into()));
    std::fs::create_dir_all(&out).map_err(|e| handpose::Error::Io { path: out.clone(), source: e })?;

    let sk = Arc::new(SkeletonSpec::msra21());
    let sc = SynthConfig::default();
    let train = generate_dataset(&sc, &sk, 200, 1, 30)?;
    let test = generate_dataset(&sc, &sk, 40, 1, 31)?;
    let images: Vec<DepthImage> = (0..train.len()).map(|i| train.load_image(i)).collect::<Result<_, _>>()?;
    let refs: Vec<&DepthImage> = images.iter().collect();
    let poses: Vec<&HandPose> = train.samples.iter().map(|s| &s.pose).collect();
    let forest = ForestConfig {
        tree_count: 2,
        max_depth: 10,
        split_sample_cap: 1000,
        ..ForestConfig::default()
    };
    let cascade = train_cascade(&refs, &poses, &train.intrinsics, &CascadeConfig { forest, ..CascadeConfig::default() }, 1)?.model;
    let voting = train_voting(&refs, &poses, &train.intrinsics, &VotingConfig { training_image_count: 200, forest, ..VotingConfig::default() }, 2)?;
    let pipe = Pipeline::new(cascade, voting, DetectConfig::default())?;

    let (mut base, mut refined) = (Vec::new(), Vec::new());
    for (i, s) in test.samples.iter().enumerate() {
        let img = test.load_image(i)?;
        let est = pipe.run(&img)?;
        if i < 3 {
            write_overlay(&out.join("overlays"), &s.id, "baseline", &img, &est.baseline, &test.intrinsics)?;
            write_overlay(&out.join("overlays"), &s.id, "refined", &img, est.refined(), &test.intrinsics)?;
        }
        base.push(est.baseline.clone());
        refined.push(est.refined().clone());
    }
    let truth: Vec<HandPose> = test.samples.iter().map(|s| s.pose.clone()).collect();
    let flags: Vec<_> = test.samples.iter().map(|s| s.stretched.clone()).collect();
    let reports = vec![evaluate("baseline", &base, &truth, &flags)?, evaluate("refined", &refined, &truth, &flags)?];

    print!("{}", format_table(&reports));
    write_csv(&reports, &out.join("report.csv"))?;
    write_json(&reports, &out.join("report.json"))?;
    println!("reports and overlays in {}", out.display());
    Ok(())
}
