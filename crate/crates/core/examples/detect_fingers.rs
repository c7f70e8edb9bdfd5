//! Finds the palm and the stretched fingertips of synthetic hands and
//! compares them against the rendered ground truth.
//!
//!     cargo run --example detect_fingers -- [count]

use std::sync::Arc;

use handpose::data::synth::SynthConfig;
use handpose::finger_detect::{detect_fingers, DetectConfig};
use handpose::geometry::{project, SkeletonSpec};

fn main() -> handpose::Result<()> {
    let count: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let sk = Arc::new(SkeletonSpec::msra21());
    let cfg = SynthConfig::default();
    let dc = DetectConfig::default();

    let mut exact = 0;
    for i in 0..count {
        let hand = cfg.sample_hand(&sk, 1, i)?;
        let det = detect_fingers(&hand.image, &cfg.intrinsics, &sk, &dc)?;
        let truth = hand.stretched.iter().filter(|&&s| s).count();
        println!(
            "hand {i}: palm at ({}, {}) r={:.1}px, {} tips found, {truth} stretched",
            det.palm_center.u,
            det.palm_center.v,
            det.palm_radius,
            det.fingers.len()
        );
        for f in &det.fingers {
            // nearest projected ground-truth tip
            let gap = (0..5)
                .filter(|&k| hand.stretched[k])
                .filter_map(|k| project(&hand.pose.joints[sk.fingertip(k)], &cfg.intrinsics).ok())
                .map(|g| ((f.tip.u as f64 - g.u).powi(2) + (f.tip.v as f64 - g.v).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            println!("    tip ({:3}, {:3}) root ({:3}, {:3}) {gap:.1}px from truth", f.tip.u, f.tip.v, f.root.u, f.root.v);
        }
        exact += (det.fingers.len() == truth) as usize;
    }
    println!("{exact}/{count} hands with the right number of fingers");
    Ok(())
}
