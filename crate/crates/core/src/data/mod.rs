//! Datasets: an index of (image, ground-truth pose) samples, dataset loaders,
//! subject splits and the synthetic hand generator.

pub mod icvl;
pub mod msra;
pub mod synth;

use std::path::PathBuf;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DepthImage, HandPose, SkeletonSpec};

/// Where a sample's depth image comes from. Files are read on demand.
#[derive(Clone, Debug)]
pub enum ImageSource {
    Memory(Arc<DepthImage>),
    MsraBin(PathBuf),
    /// 16-bit PNG, segmented to a depth window around the annotated joints.
    IcvlPng {
        path: PathBuf,
        near: f32,
        far: f32,
        bbox: [i32; 4],
    },
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    pub source: ImageSource,
    pub pose: HandPose,
    pub subject: u32,
    pub gesture: String,
    /// Per finger chain: is the finger stretched out. `None` when unknown.
    pub stretched: Option<Vec<bool>>,
}

impl Sample {
    pub fn load_image(&self, background: f32) -> Result<DepthImage> {
        match &self.source {
            ImageSource::Memory(img) => Ok((**img).clone()),
            ImageSource::MsraBin(path) => msra::read_depth_bin(path, background),
            ImageSource::IcvlPng { path, near, far, bbox } => icvl::read_depth_png(path, *near, *far, *bbox, background),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DatasetIndex {
    pub samples: Vec<Sample>,
    pub skeleton: Arc<SkeletonSpec>,
    pub intrinsics: CameraIntrinsics,
    pub background: f32,
}

impl DatasetIndex {
    pub fn new(skeleton: Arc<SkeletonSpec>, intrinsics: CameraIntrinsics, background: f32) -> Self {
        DatasetIndex {
            samples: Vec::new(),
            skeleton,
            intrinsics,
            background,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn load_image(&self, i: usize) -> Result<DepthImage> {
        self.samples[i].load_image(self.background)
    }

    /// Distinct subject ids, ascending.
    pub fn subjects(&self) -> Vec<u32> {
        let mut s: Vec<u32> = self.samples.iter().map(|s| s.subject).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Copy holding only the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> DatasetIndex {
        DatasetIndex {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            skeleton: self.skeleton.clone(),
            intrinsics: self.intrinsics,
            background: self.background,
        }
    }

    /// Checks every pose against the skeleton.
    pub fn validate(&self) -> Result<()> {
        self.skeleton.validate()?;
        for s in &self.samples {
            if s.pose.joint_count() != self.skeleton.joint_count {
                return Err(Error::Data {
                    sample: s.id.clone(),
                    reason: format!(
                        "{} joints, skeleton has {}",
                        s.pose.joint_count(),
                        self.skeleton.joint_count
                    ),
                });
            }
            if let Some(f) = &s.stretched {
                if f.len() != self.skeleton.finger_chains.len() {
                    return Err(Error::Data {
                        sample: s.id.clone(),
                        reason: "stretched flags do not match finger count".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Splits by subject: everything from `held_out` goes to the test side.
pub fn split_leave_one_subject_out(index: &DatasetIndex, held_out: u32) -> Result<(DatasetIndex, DatasetIndex)> {
    if !index.samples.iter().any(|s| s.subject == held_out) {
        return Err(Error::UnknownSubject(held_out));
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..index.len()).partition(|&i| index.samples[i].subject == held_out);
    Ok((index.subset(&train), index.subset(&test)))
}
