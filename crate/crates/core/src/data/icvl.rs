//! ICVL hand posture layout.
//!
//! A label file holds one line per frame: the image path (relative to the
//! image directory) followed by 16 joints as `u v d` triples (pixels, mm).
//! Images are 16-bit grayscale PNGs with depth in mm and 0 for no reading.
//! The hand is segmented by keeping pixels within a depth window around the
//! annotated joints and inside a margin around their image bounding box.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{DatasetIndex, ImageSource, Sample};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DepthImage, HandPose, SkeletonSpec, DEFAULT_BACKGROUND};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcvlConfig {
    pub intrinsics: CameraIntrinsics,
    /// Depth kept beyond the nearest and farthest joint, mm.
    pub depth_margin: f32,
    /// Pixels kept around the joints' image bounding box.
    pub pixel_margin: i32,
}

impl Default for IcvlConfig {
    fn default() -> Self {
        IcvlConfig {
            intrinsics: CameraIntrinsics::default(),
            depth_margin: 150.0,
            pixel_margin: 30,
        }
    }
}

/// Reads a 16-bit depth PNG keeping only depths in `[near, far]` inside `bbox`
/// (`[left, top, right, bottom]`, exclusive right/bottom).
pub fn read_depth_png(path: &Path, near: f32, far: f32, bbox: [i32; 4], background: f32) -> Result<DepthImage> {
    let img = image::open(path)?.into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut depths = vec![background; w * h];
    for (x, y, px) in img.enumerate_pixels() {
        let (u, v) = (x as i32, y as i32);
        if u < bbox[0] || v < bbox[1] || u >= bbox[2] || v >= bbox[3] {
            continue;
        }
        let d = px.0[0] as f32;
        if d > 0.0 && d >= near && d <= far {
            depths[y as usize * w + x as usize] = d;
        }
    }
    DepthImage::new(w, h, depths, background)
}

/// Parses one label line into (image path, pose, segmentation window).
fn parse_line(
    path: &Path,
    line_no: usize,
    line: &str,
    skeleton: &Arc<SkeletonSpec>,
    cfg: &IcvlConfig,
) -> Result<(String, HandPose, f32, f32, [i32; 4])> {
    let mut fields = line.split_whitespace();
    let err = |reason: String| Error::Parse {
        path: path.to_path_buf(),
        line: line_no,
        reason,
    };
    let image = fields.next().ok_or_else(|| err("empty line".into()))?.to_string();
    let nums: Vec<f64> = fields
        .map(|s| s.parse::<f64>().map_err(|_| err(format!("not a number: {s:?}"))))
        .collect::<Result<_>>()?;
    let want = 3 * skeleton.joint_count;
    if nums.len() != want {
        return Err(err(format!("expected 1 + {want} fields, found 1 + {}", nums.len())));
    }
    let joints = nums
        .chunks_exact(3)
        .map(|c| cfg.intrinsics.backproject_uvd(c[0], c[1], c[2]))
        .collect();
    let pose = HandPose::new(joints, skeleton.clone()).map_err(|e| err(e.to_string()))?;
    let ds = nums.chunks_exact(3).map(|c| c[2] as f32);
    let near = ds.clone().fold(f32::INFINITY, f32::min) - cfg.depth_margin;
    let far = ds.fold(f32::NEG_INFINITY, f32::max) + cfg.depth_margin;
    let (mut l, mut t, mut r, mut b) = (i32::MAX, i32::MAX, i32::MIN, i32::MIN);
    for c in nums.chunks_exact(3) {
        l = l.min(c[0].floor() as i32);
        t = t.min(c[1].floor() as i32);
        r = r.max(c[0].ceil() as i32 + 1);
        b = b.max(c[1].ceil() as i32 + 1);
    }
    let m = cfg.pixel_margin;
    Ok((image, pose, near, far, [l - m, t - m, r + m, b + m]))
}

/// Indexes the frames listed in `labels`, with images under `image_dir`.
/// Subjects are numbered by the sorted distinct first path components.
pub fn load_icvl(labels: &Path, image_dir: &Path, cfg: &IcvlConfig) -> Result<DatasetIndex> {
    let skeleton = Arc::new(SkeletonSpec::icvl16());
    let text = fs::read_to_string(labels).map_err(|e| Error::io(labels, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(parse_line(labels, i + 1, line, &skeleton, cfg)?);
    }
    let first_component = |p: &str| p.split(['/', '\\']).next().unwrap_or("").to_string();
    let groups: BTreeMap<String, u32> = {
        let mut names: Vec<String> = rows.iter().map(|r| first_component(&r.0)).collect();
        names.sort();
        names.dedup();
        names.into_iter().enumerate().map(|(i, n)| (n, i as u32)).collect()
    };
    let mut index = DatasetIndex::new(skeleton, cfg.intrinsics, DEFAULT_BACKGROUND);
    for (image, pose, near, far, bbox) in rows {
        let file: PathBuf = image_dir.join(&image);
        index.samples.push(Sample {
            id: image.replace(['/', '\\'], "_"),
            source: ImageSource::IcvlPng {
                path: file,
                near,
                far,
                bbox,
            },
            pose,
            subject: groups[&first_component(&image)],
            gesture: String::new(),
            stretched: None,
        });
    }
    Ok(index)
}

/// Writes `index` in the ICVL layout: `<root>/labels.txt` plus one 16-bit
/// PNG per sample at `<root>/S<subject>/<id>.png`. Depths are rounded to mm.
pub fn write_icvl(index: &DatasetIndex, root: &Path, cfg: &IcvlConfig) -> Result<()> {
    if index.skeleton.joint_count != 16 {
        return Err(Error::SkeletonMismatch {
            expected: 16,
            found: index.skeleton.joint_count,
        });
    }
    let mut labels = String::new();
    for (i, s) in index.samples.iter().enumerate() {
        let rel = format!("S{}/{}.png", s.subject, s.id);
        let path = root.join(&rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let img = index.load_image(i)?;
        let mut buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(img.width() as u32, img.height() as u32);
        for (p, d) in img.foreground_pixels() {
            buf.put_pixel(p.u as u32, p.v as u32, image::Luma([d.round().clamp(1.0, 65535.0) as u16]));
        }
        buf.save(&path)?;
        labels.push_str(&rel);
        for j in &s.pose.joints {
            let q = crate::geometry::project(j, &cfg.intrinsics)?;
            labels.push_str(&format!(" {} {} {}", q.u, q.v, j.z));
        }
        labels.push('\n');
    }
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let path = root.join("labels.txt");
    fs::write(&path, labels).map_err(|e| Error::io(&path, e))
}
