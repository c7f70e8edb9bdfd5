//! Full inference: cascade baseline, finger detection and voting refinement.

use std::time::{Duration, Instant};

use crate::cascade::CascadeModel;
use crate::error::{Error, Result};
use crate::finger_detect::{detect_and_identify, DetectConfig, Detection};
use crate::geometry::{DepthImage, HandPose};
use crate::voting::{refine, Refinement, VotingModel};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimings {
    pub cascade: Duration,
    pub detect: Duration,
    pub vote: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.cascade + self.detect + self.vote
    }

    pub fn add(&mut self, o: &StageTimings) {
        self.cascade += o.cascade;
        self.detect += o.detect;
        self.vote += o.vote;
    }
}

#[derive(Clone, Debug)]
pub struct PoseEstimate {
    pub baseline: HandPose,
    /// `None` when the detector could not analyze the silhouette.
    pub detection: Option<Detection>,
    pub refinement: Refinement,
    pub timings: StageTimings,
}

impl PoseEstimate {
    pub fn refined(&self) -> &HandPose {
        &self.refinement.pose
    }
}

pub struct Pipeline {
    pub cascade: CascadeModel,
    pub voting: VotingModel,
    pub detect: DetectConfig,
}

impl Pipeline {
    pub fn new(cascade: CascadeModel, voting: VotingModel, detect: DetectConfig) -> Result<Self> {
        if cascade.skeleton != voting.skeleton {
            return Err(Error::SkeletonMismatch {
                expected: cascade.skeleton.joint_count,
                found: voting.skeleton.joint_count,
            });
        }
        detect.validate()?;
        Ok(Pipeline { cascade, voting, detect })
    }

    pub fn run(&self, img: &DepthImage) -> Result<PoseEstimate> {
        let intr = &self.cascade.intrinsics;
        let t0 = Instant::now();
        let baseline = self.cascade.predict(img)?;
        let t1 = Instant::now();
        let detection = match detect_and_identify(img, intr, &baseline, &self.detect) {
            Ok(d) => Some(d),
            Err(Error::NoHand | Error::EmptyMask | Error::DegenerateMask) => None,
            Err(e) => return Err(e),
        };
        let t2 = Instant::now();
        let empty = Detection {
            palm_center: crate::geometry::Pixel::new(0, 0),
            palm_radius: 0.0,
            fingers: Vec::new(),
        };
        let refinement = refine(
            img,
            intr,
            &baseline,
            detection.as_ref().unwrap_or(&empty),
            &self.voting.forest,
            self.voting.config.distance_threshold,
        )?;
        let t3 = Instant::now();
        Ok(PoseEstimate {
            baseline,
            detection,
            refinement,
            timings: StageTimings {
                cascade: t1 - t0,
                detect: t2 - t1,
                vote: t3 - t2,
            },
        })
    }
}
