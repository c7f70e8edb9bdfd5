//! Depth-difference features: `I(u + δ1) − I(u + δ2)` around a reference pixel.
//!
//! Offsets are stored in millimeters. With depth normalization on, an offset
//! of `δ` mm moves the probe by `δ · focal / depth` pixels, where `depth` is
//! the anchor's depth, so probes cover the same physical neighborhood at any
//! distance from the camera. Probes that fall off the image or on background
//! read the background sentinel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DepthImage, Pixel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffsetPair {
    pub first: [f32; 2],
    pub second: [f32; 2],
}

impl OffsetPair {
    pub const ZERO: OffsetPair = OffsetPair {
        first: [0.0, 0.0],
        second: [0.0, 0.0],
    };

    pub fn swapped(self) -> OffsetPair {
        OffsetPair {
            first: self.second,
            second: self.first,
        }
    }
}

/// Probe geometry shared by a forest's training and prediction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Per-axis bound on offsets, mm.
    pub max_offset_radius: f32,
    pub depth_normalize: bool,
    /// Focal length (px) used to turn mm offsets into pixels.
    pub focal_length: f32,
    /// Depth (mm) used in place of the anchor depth when normalization is off.
    pub reference_depth: f32,
}

impl FeatureConfig {
    pub fn cascade() -> Self {
        FeatureConfig {
            max_offset_radius: 120.0,
            ..Self::default()
        }
    }

    pub fn voting() -> Self {
        FeatureConfig {
            max_offset_radius: 60.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_offset_radius > 0.0) {
            return Err(Error::invalid("feature config", "max_offset_radius must be positive"));
        }
        if !(self.focal_length > 0.0 && self.reference_depth > 0.0) {
            return Err(Error::invalid(
                "feature config",
                "focal_length and reference_depth must be positive",
            ));
        }
        Ok(())
    }

    /// Pixels per millimeter of offset for an anchor at `depth`.
    #[inline]
    pub fn scale_for(&self, depth: f32) -> f32 {
        if self.depth_normalize {
            self.focal_length / depth.max(1.0)
        } else {
            self.focal_length / self.reference_depth
        }
    }
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            max_offset_radius: 60.0,
            depth_normalize: true,
            focal_length: 241.42,
            reference_depth: 300.0,
        }
    }
}

/// Reference point of a feature: a pixel plus the depth used for offset scaling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anchor {
    pub pixel: Pixel,
    pub depth: f32,
}

impl Anchor {
    /// Anchor at `pixel` scaled by the depth stored there.
    pub fn at_pixel(img: &DepthImage, pixel: Pixel) -> Result<Self> {
        Ok(Anchor {
            pixel,
            depth: img.get(pixel)?,
        })
    }
}

#[inline]
fn round_px(x: f32) -> i32 {
    // floor(x + 0.5) without a libm call; valid for |x| < 2^14
    (x + 16384.5) as i32 - 16384
}

/// Feature response with a precomputed pixel scale.
#[inline]
pub fn response(img: &DepthImage, pixel: Pixel, scale: f32, pair: &OffsetPair) -> f32 {
    let u1 = pixel.u + round_px(pair.first[0] * scale);
    let v1 = pixel.v + round_px(pair.first[1] * scale);
    let u2 = pixel.u + round_px(pair.second[0] * scale);
    let v2 = pixel.v + round_px(pair.second[1] * scale);
    img.depth_or_background(u1, v1) - img.depth_or_background(u2, v2)
}

/// Pixel positions probed by `pair` around `pixel` at `scale`.
pub fn probe_pixels(pixel: Pixel, scale: f32, pair: &OffsetPair) -> (Pixel, Pixel) {
    (
        Pixel::new(
            pixel.u + round_px(pair.first[0] * scale),
            pixel.v + round_px(pair.first[1] * scale),
        ),
        Pixel::new(
            pixel.u + round_px(pair.second[0] * scale),
            pixel.v + round_px(pair.second[1] * scale),
        ),
    )
}

/// Depth difference around an explicit anchor.
#[inline]
pub fn depth_difference_at(img: &DepthImage, anchor: Anchor, pair: &OffsetPair, cfg: &FeatureConfig) -> f32 {
    response(img, anchor.pixel, cfg.scale_for(anchor.depth), pair)
}

/// Depth difference around `reference`, scaled by the depth stored at it.
pub fn depth_difference(img: &DepthImage, reference: Pixel, pair: &OffsetPair, cfg: &FeatureConfig) -> Result<f32> {
    let anchor = Anchor::at_pixel(img, reference)?;
    Ok(depth_difference_at(img, anchor, pair, cfg))
}

/// One pair with both offsets uniform on `[-r, r]^2`.
pub fn random_offset_pair<R: Rng + ?Sized>(rng: &mut R, radius: f32) -> OffsetPair {
    let mut coord = || rng.gen_range(-radius..=radius);
    OffsetPair {
        first: [coord(), coord()],
        second: [coord(), coord()],
    }
}

pub fn sample_offset_pairs(seed: u64, cfg: &FeatureConfig, count: usize) -> Vec<OffsetPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| random_offset_pair(&mut rng, cfg.max_offset_radius))
        .collect()
}
