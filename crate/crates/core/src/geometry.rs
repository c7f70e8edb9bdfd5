//! Depth images, camera projection, skeletons and pose containers.
//!
//! All 3D quantities are camera-frame millimeters: x right, y down, z along
//! the optical axis.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;

/// Default background sentinel (mm).
pub const DEFAULT_BACKGROUND: f32 = 10_000.0;

/// Integer pixel location. Signed so that probe offsets may leave the image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub u: i32,
    pub v: i32,
}

impl Pixel {
    pub const fn new(u: i32, v: i32) -> Self {
        Pixel { u, v }
    }
}

/// Sub-pixel image location.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
}

impl ImagePoint {
    pub fn round(self) -> Pixel {
        Pixel::new(self.u.round() as i32, self.v.round() as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let intr = CameraIntrinsics { fx, fy, cx, cy };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::invalid(
                "intrinsics",
                format!("focal lengths must be positive, got fx={} fy={}", self.fx, self.fy),
            ));
        }
        Ok(())
    }

    /// 3D point seen at fractional pixel `(u, v)` with depth `depth`.
    pub fn backproject_uvd(&self, u: f64, v: f64, depth: f64) -> Point3 {
        Point3::new(
            (u - self.cx) * depth / self.fx,
            (v - self.cy) * depth / self.fy,
            depth,
        )
    }
}

impl Default for CameraIntrinsics {
    /// 320x240 depth camera convention shared by the public hand datasets.
    fn default() -> Self {
        CameraIntrinsics {
            fx: 241.42,
            fy: 241.42,
            cx: 160.0,
            cy: 120.0,
        }
    }
}

/// Dense depth map in millimeters. Every stored value is either a foreground
/// depth in `(0, background)` or exactly `background`.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    depths: Vec<f32>,
    background: f32,
}

impl DepthImage {
    /// Builds an image from row-major depths. Values that are not finite,
    /// not positive, or not below `background` are stored as `background`.
    pub fn new(width: usize, height: usize, mut depths: Vec<f32>, background: f32) -> Result<Self> {
        if depths.len() != width * height {
            return Err(Error::invalid(
                "depth image",
                format!("{}x{} needs {} depths, got {}", width, height, width * height, depths.len()),
            ));
        }
        if !(background.is_finite() && background > 0.0) {
            return Err(Error::invalid("depth image", format!("bad background value {background}")));
        }
        for d in depths.iter_mut() {
            if !(d.is_finite() && *d > 0.0 && *d < background) {
                *d = background;
            }
        }
        Ok(DepthImage {
            width,
            height,
            depths,
            background,
        })
    }

    pub fn filled(width: usize, height: usize, background: f32) -> Self {
        DepthImage {
            width,
            height,
            depths: vec![background; width * height],
            background,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn background(&self) -> f32 {
        self.background
    }

    pub fn depths(&self) -> &[f32] {
        &self.depths
    }

    pub fn in_bounds(&self, p: Pixel) -> bool {
        p.u >= 0 && p.v >= 0 && (p.u as usize) < self.width && (p.v as usize) < self.height
    }

    pub fn check_bounds(&self, p: Pixel) -> Result<()> {
        if self.in_bounds(p) {
            Ok(())
        } else {
            Err(Error::OutOfBounds {
                u: p.u as i64,
                v: p.v as i64,
                width: self.width,
                height: self.height,
            })
        }
    }

    /// Depth at an in-bounds pixel.
    pub fn get(&self, p: Pixel) -> Result<f32> {
        self.check_bounds(p)?;
        Ok(self.depths[p.v as usize * self.width + p.u as usize])
    }

    /// Depth at `(u, v)`, reading `background` outside the image.
    #[inline]
    pub fn depth_or_background(&self, u: i32, v: i32) -> f32 {
        if u < 0 || v < 0 || u as usize >= self.width || v as usize >= self.height {
            self.background
        } else {
            self.depths[v as usize * self.width + u as usize]
        }
    }

    pub fn is_foreground(&self, p: Pixel) -> bool {
        self.in_bounds(p) && self.depth_or_background(p.u, p.v) < self.background
    }

    /// Sets the depth at an in-bounds pixel, normalizing invalid values to background.
    pub fn set(&mut self, p: Pixel, depth: f32) -> Result<()> {
        self.check_bounds(p)?;
        let d = if depth.is_finite() && depth > 0.0 && depth < self.background {
            depth
        } else {
            self.background
        };
        self.depths[p.v as usize * self.width + p.u as usize] = d;
        Ok(())
    }

    /// Foreground pixels in row-major order.
    pub fn foreground_pixels(&self) -> impl Iterator<Item = (Pixel, f32)> + '_ {
        let w = self.width;
        let bg = self.background;
        self.depths
            .iter()
            .enumerate()
            .filter(move |(_, &d)| d < bg)
            .map(move |(i, &d)| (Pixel::new((i % w) as i32, (i / w) as i32), d))
    }

    pub fn foreground_count(&self) -> usize {
        self.depths.iter().filter(|&&d| d < self.background).count()
    }
}

/// Binary image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::invalid(
                "mask",
                format!("{}x{} needs {} entries, got {}", width, height, width * height, bits.len()),
            ));
        }
        Ok(Mask { width, height, bits })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                bits.push(f(u, v));
            }
        }
        Mask { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// False outside the image.
    #[inline]
    pub fn get(&self, u: i32, v: i32) -> bool {
        u >= 0
            && v >= 0
            && (u as usize) < self.width
            && (v as usize) < self.height
            && self.bits[v as usize * self.width + u as usize]
    }

    pub fn set(&mut self, u: usize, v: usize, value: bool) {
        self.bits[v * self.width + u] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Copy translated by `(du, dv)`; pixels shifted out of the frame are dropped.
    pub fn translated(&self, du: i32, dv: i32) -> Mask {
        Mask::from_fn(self.width, self.height, |u, v| {
            self.get(u as i32 - du, v as i32 - dv)
        })
    }
}

/// Joint layout of a hand skeleton.
///
/// Finger chains run root to tip; each root is also a palm joint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkeletonSpec {
    pub name: String,
    pub joint_count: usize,
    pub palm_joints: Vec<usize>,
    pub finger_chains: Vec<Vec<usize>>,
    pub finger_names: Vec<String>,
}

impl SkeletonSpec {
    /// 21 joints: wrist, then index, middle, ring, little, thumb with
    /// (root, pip, dip, tip) each.
    pub fn msra21() -> Self {
        let chain = |f: usize| (0..4).map(|k| 1 + 4 * f + k).collect::<Vec<_>>();
        SkeletonSpec {
            name: "msra21".into(),
            joint_count: 21,
            palm_joints: vec![0, 1, 5, 9, 13, 17],
            finger_chains: (0..5).map(chain).collect(),
            finger_names: ["index", "middle", "ring", "little", "thumb"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }

    /// 16 joints: palm, then thumb, index, middle, ring, little with
    /// (root, mid, tip) each.
    pub fn icvl16() -> Self {
        let chain = |f: usize| (0..3).map(|k| 1 + 3 * f + k).collect::<Vec<_>>();
        SkeletonSpec {
            name: "icvl16".into(),
            joint_count: 16,
            palm_joints: vec![0, 1, 4, 7, 10, 13],
            finger_chains: (0..5).map(chain).collect(),
            finger_names: ["thumb", "index", "middle", "ring", "little"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::invalid("skeleton", reason));
        if self.finger_chains.len() != 5 {
            return bad(format!("expected 5 finger chains, got {}", self.finger_chains.len()));
        }
        let mut seen = vec![0u8; self.joint_count];
        for &j in &self.palm_joints {
            if j >= self.joint_count {
                return bad(format!("palm joint {j} out of range"));
            }
            seen[j] += 1;
        }
        for (f, chain) in self.finger_chains.iter().enumerate() {
            if chain.len() < 2 {
                return bad(format!("finger {f} chain shorter than 2"));
            }
            if !self.palm_joints.contains(&chain[0]) {
                return bad(format!("finger {f} root {} is not a palm joint", chain[0]));
            }
            for &j in &chain[1..] {
                if j >= self.joint_count {
                    return bad(format!("finger {f} joint {j} out of range"));
                }
                seen[j] += 1;
            }
        }
        if let Some(j) = seen.iter().position(|&c| c != 1) {
            return bad(format!("joint {j} appears {} times", seen[j]));
        }
        Ok(())
    }

    pub fn fingertip(&self, finger: usize) -> usize {
        *self.finger_chains[finger].last().unwrap()
    }

    pub fn fingertips(&self) -> Vec<usize> {
        (0..self.finger_chains.len()).map(|f| self.fingertip(f)).collect()
    }

    pub fn finger_root(&self, finger: usize) -> usize {
        self.finger_chains[finger][0]
    }

    /// Chain joints excluding the root.
    pub fn finger_distal(&self, finger: usize) -> &[usize] {
        &self.finger_chains[finger][1..]
    }

    /// The palm joint that is not a finger root (wrist or palm center).
    pub fn wrist(&self) -> usize {
        *self
            .palm_joints
            .iter()
            .find(|j| !self.finger_chains.iter().any(|c| c[0] == **j))
            .expect("skeleton without wrist")
    }

    /// Chain of the middle finger, found by name.
    pub fn middle_finger(&self) -> usize {
        self.finger_names.iter().position(|n| n == "middle").unwrap_or(1)
    }
}

/// Ordered 3D joint positions (mm) on a skeleton.
#[derive(Clone, Debug, PartialEq)]
pub struct HandPose {
    pub joints: Vec<Point3>,
    pub skeleton: Arc<SkeletonSpec>,
}

impl HandPose {
    pub fn new(joints: Vec<Point3>, skeleton: Arc<SkeletonSpec>) -> Result<Self> {
        if joints.len() != skeleton.joint_count {
            return Err(Error::SkeletonMismatch {
                expected: skeleton.joint_count,
                found: joints.len(),
            });
        }
        if let Some(k) = joints.iter().position(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::DegeneratePose(format!("joint {k} is not finite")));
        }
        Ok(HandPose { joints, skeleton })
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn gather(&self, indices: &[usize]) -> Vec<Point3> {
        indices.iter().map(|&j| self.joints[j]).collect()
    }

    /// Writes `values` (xyz triplets) into the joints listed in `indices`.
    pub fn scatter(&mut self, indices: &[usize], values: &[Point3]) {
        for (&j, p) in indices.iter().zip(values) {
            self.joints[j] = *p;
        }
    }
}

pub fn backproject(img: &DepthImage, p: Pixel, intr: &CameraIntrinsics) -> Result<Point3> {
    let d = img.get(p)?;
    if d >= img.background() {
        return Err(Error::Background {
            u: p.u as i64,
            v: p.v as i64,
        });
    }
    Ok(intr.backproject_uvd(p.u as f64, p.v as f64, d as f64))
}

pub fn project(pt: &Point3, intr: &CameraIntrinsics) -> Result<ImagePoint> {
    if !(pt.z > 0.0) {
        return Err(Error::DegenerateDepth { z: pt.z });
    }
    Ok(ImagePoint {
        u: intr.fx * pt.x / pt.z + intr.cx,
        v: intr.fy * pt.y / pt.z + intr.cy,
    })
}

pub fn foreground_mask(img: &DepthImage) -> Mask {
    let bg = img.background();
    Mask {
        width: img.width(),
        height: img.height(),
        bits: img.depths().iter().map(|&d| d < bg).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 160.0, 120.0).unwrap()
    }

    fn single(u: i32, v: i32, d: f32) -> DepthImage {
        let mut img = DepthImage::filled(320, 240, DEFAULT_BACKGROUND);
        img.set(Pixel::new(u, v), d).unwrap();
        img
    }

    #[test]
    fn principal_point_maps_to_axis() {
        let img = single(160, 120, 100.0);
        let p = backproject(&img, Pixel::new(160, 120), &intr()).unwrap();
        assert_eq!(p, Point3::new(0.0, 0.0, 100.0));
        let img = single(260, 120, 100.0);
        let p = backproject(&img, Pixel::new(260, 120), &intr()).unwrap();
        assert_eq!(p, Point3::new(100.0, 0.0, 100.0));
    }

    #[test]
    fn backproject_errors() {
        let img = single(10, 10, 100.0);
        assert!(matches!(
            backproject(&img, Pixel::new(-1, 0), &intr()),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(matches!(
            backproject(&img, Pixel::new(11, 10), &intr()),
            Err(Error::Background { .. })
        ));
    }

    #[test]
    fn project_examples() {
        let ip = project(&Point3::new(0.0, 0.0, 100.0), &intr()).unwrap();
        assert_eq!((ip.u, ip.v), (160.0, 120.0));
        let ip = project(&Point3::new(50.0, 0.0, 100.0), &intr()).unwrap();
        assert_eq!(ip.u, 210.0);
        assert!(matches!(
            project(&Point3::new(1.0, 1.0, 0.0), &intr()),
            Err(Error::DegenerateDepth { .. })
        ));
    }

    #[test]
    fn mask_examples() {
        let img = DepthImage::filled(8, 6, DEFAULT_BACKGROUND);
        assert_eq!(foreground_mask(&img).count(), 0);
        let img = single(3, 4, 500.0);
        let m = foreground_mask(&img);
        assert_eq!(m.count(), 1);
        assert!(m.get(3, 4));
    }

    #[test]
    fn constructor_normalizes_invalid_depths() {
        let img = DepthImage::new(2, 2, vec![-1.0, f32::NAN, 20_000.0, 300.0], 10_000.0).unwrap();
        assert_eq!(img.depths(), &[10_000.0, 10_000.0, 10_000.0, 300.0]);
        assert!(DepthImage::new(2, 2, vec![1.0; 3], 10_000.0).is_err());
    }

    #[test]
    fn skeletons_are_valid() {
        for s in [SkeletonSpec::msra21(), SkeletonSpec::icvl16()] {
            s.validate().unwrap();
            for f in 0..5 {
                assert_eq!(s.fingertip(f), *s.finger_chains[f].last().unwrap());
            }
        }
        assert_eq!(SkeletonSpec::msra21().wrist(), 0);
        assert_eq!(SkeletonSpec::msra21().middle_finger(), 1);
        assert_eq!(SkeletonSpec::icvl16().middle_finger(), 2);
    }

    #[test]
    fn pose_length_checked() {
        let sk = Arc::new(SkeletonSpec::icvl16());
        assert!(HandPose::new(vec![Point3::origin(); 15], sk.clone()).is_err());
        assert!(HandPose::new(vec![Point3::new(f64::NAN, 0.0, 1.0); 16], sk).is_err());
    }

    proptest! {
        #[test]
        fn project_backproject_round_trip(u in 0i32..320, v in 0i32..240, d in 50.0f32..5000.0) {
            let img = single(u, v, d);
            let i = intr();
            let p = backproject(&img, Pixel::new(u, v), &i).unwrap();
            let back = project(&p, &i).unwrap();
            prop_assert!((back.u - u as f64).abs() < 0.5 && (back.v - v as f64).abs() < 0.5);
        }

        #[test]
        fn backproject_inverts_project(x in -300.0f64..300.0, y in -300.0f64..300.0, z in 10.0f64..3000.0) {
            let i = intr();
            let pt = Point3::new(x, y, z);
            let ip = project(&pt, &i).unwrap();
            let q = i.backproject_uvd(ip.u, ip.v, z);
            prop_assert!((q - pt).norm() <= 1e-6 * pt.coords.norm());
        }

        #[test]
        fn mask_counts_foreground(depths in proptest::collection::vec(prop_oneof![Just(10_000.0f32), 1.0f32..9999.0], 64)) {
            let img = DepthImage::new(8, 8, depths.clone(), 10_000.0).unwrap();
            let m = foreground_mask(&img);
            prop_assert_eq!(m.count(), depths.iter().filter(|&&d| d < 10_000.0).count());
            // idempotent: masking a depth image built from the mask gives the same mask
            let again = DepthImage::new(8, 8, m.bits().iter().map(|&b| if b { 1.0 } else { 10_000.0 }).collect(), 10_000.0).unwrap();
            prop_assert_eq!(foreground_mask(&again), m);
        }
    }
}
