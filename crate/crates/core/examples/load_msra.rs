//! Loads a dataset in the MSRA layout (`P<subject>/<gesture>/joint.txt` plus
//! `NNNNNN_depth.bin`) and prints a summary. Without an argument a small
//! synthetic dataset is written in that layout first.
//!
//!     cargo run --example load_msra -- [dataset_root]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use handpose::data::msra::{load_msra, write_msra, MsraConfig};
use handpose::data::synth::{generate_dataset, SynthConfig};
use handpose::geometry::SkeletonSpec;

fn main() -> handpose::Result<()> {
    let cfg = MsraConfig::default();
    let root = match std::env::args().nth(1) {
        Some(p) => PathBuf::from(p),
        None => {
            let root = std::env::temp_dir().join("handpose_msra_demo");
            let sk = Arc::new(SkeletonSpec::msra21());
            write_msra(&generate_dataset(&SynthConfig::default(), &sk, 24, 2, 5)?, &root, &cfg)?;
            println!("wrote synthetic dataset to {}", root.display());
            root
        }
    };

    let data = load_msra(&root, &cfg)?;
    println!("{} samples, subjects {:?}", data.len(), data.subjects());
    let mut per_gesture: BTreeMap<(u32, &str), usize> = BTreeMap::new();
    for s in &data.samples {
        *per_gesture.entry((s.subject, s.gesture.as_str())).or_default() += 1;
    }
    for ((subject, gesture), n) in per_gesture {
        println!("  P{subject}/{gesture}: {n}");
    }

    let first = &data.samples[0];
    let img = data.load_image(0)?;
    println!(
        "{}: {}x{}, {} hand pixels, wrist at ({:.1}, {:.1}, {:.1}) mm",
        first.id,
        img.width(),
        img.height(),
        img.foreground_pixels().count(),
        first.pose.joints[0].x,
        first.pose.joints[0].y,
        first.pose.joints[0].z
    );
    Ok(())
}
