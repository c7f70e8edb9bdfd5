//! Leave-one-subject-out splits over a multi-subject dataset.
//!
//!     cargo run --example loso_split

use std::sync::Arc;

use handpose::data::split_leave_one_subject_out;
use handpose::data::synth::{generate_dataset, SynthConfig};
use handpose::geometry::SkeletonSpec;

fn main() -> handpose::Result<()> {
    let sk = Arc::new(SkeletonSpec::msra21());
    let data = generate_dataset(&SynthConfig::default(), &sk, 45, 3, 9)?;
    for subject in data.subjects() {
        let (train, test) = split_leave_one_subject_out(&data, subject)?;
        println!(
            "held out P{subject}: train {} images from {:?}, test {} images",
            train.len(),
            train.subjects(),
            test.len()
        );
        assert!(test.samples.iter().all(|s| s.subject == subject));
    }
    match split_leave_one_subject_out(&data, 7) {
        Err(e) => println!("P7: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
