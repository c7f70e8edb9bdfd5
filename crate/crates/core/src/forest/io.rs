//! Binary forest files.
//!
//! All numbers are little-endian.
//!
//! ```text
//! magic                 8 bytes  "HPFOREST"
//! version               u32      FORMAT_VERSION
//! target_dim            u32
//! features              max_offset_radius f32, depth_normalize u8,
//!                       focal_length f32, reference_depth f32
//! config                tree_count u32, max_depth u32, features_per_split u32,
//!                       thresholds_per_feature u32, min_info_gain f64,
//!                       min_samples_leaf u32, split_sample_cap u32
//! tree_count            u32
//! per tree:
//!   node_count          u32
//!   nodes, pre-order:
//!     split  tag u8 = 0, first.x f32, first.y f32, second.x f32, second.y f32,
//!            threshold f32; followed by the left then the right subtree
//!     leaf   tag u8 = 1, sample_count u32, mean target_dim × f64
//! ```

use std::path::Path;

use super::{Forest, ForestConfig, Node, Tree};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, OffsetPair};

pub const MAGIC: &[u8; 8] = b"HPFOREST";
pub const FORMAT_VERSION: u32 = 1;

const TAG_SPLIT: u8 = 0;
const TAG_LEAF: u8 = 1;

impl Forest {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        put_u32(&mut w, FORMAT_VERSION);
        put_u32(&mut w, self.dim as u32);
        let f = &self.features;
        w.extend_from_slice(&f.max_offset_radius.to_le_bytes());
        w.push(f.depth_normalize as u8);
        w.extend_from_slice(&f.focal_length.to_le_bytes());
        w.extend_from_slice(&f.reference_depth.to_le_bytes());
        let c = &self.config;
        put_u32(&mut w, c.tree_count as u32);
        put_u32(&mut w, c.max_depth as u32);
        put_u32(&mut w, c.features_per_split as u32);
        put_u32(&mut w, c.thresholds_per_feature as u32);
        w.extend_from_slice(&c.min_info_gain.to_le_bytes());
        put_u32(&mut w, c.min_samples_leaf as u32);
        put_u32(&mut w, c.split_sample_cap as u32);
        put_u32(&mut w, self.trees.len() as u32);
        for tree in &self.trees {
            put_u32(&mut w, tree.nodes.len() as u32);
            for node in &tree.nodes {
                match node {
                    Node::Split { pair, threshold, .. } => {
                        w.push(TAG_SPLIT);
                        for x in pair.first.iter().chain(pair.second.iter()) {
                            w.extend_from_slice(&x.to_le_bytes());
                        }
                        w.extend_from_slice(&threshold.to_le_bytes());
                    }
                    Node::Leaf { mean, count } => {
                        w.push(TAG_LEAF);
                        put_u32(&mut w, *count);
                        for m in mean {
                            w.extend_from_slice(&m.to_le_bytes());
                        }
                    }
                }
            }
        }
        w
    }

    /// Parses a forest file; `path` only labels errors.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Forest> {
        let mut r = Reader { bytes, at: 0, path };
        let magic = r.take(8)?;
        if magic != MAGIC {
            return Err(r.error(0, "bad magic bytes"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(r.error(r.at - 4, "zero target dimension"));
        }
        let features = FeatureConfig {
            max_offset_radius: r.f32()?,
            depth_normalize: r.u8()? != 0,
            focal_length: r.f32()?,
            reference_depth: r.f32()?,
        };
        let config = ForestConfig {
            tree_count: r.u32()? as usize,
            max_depth: r.u32()? as usize,
            features_per_split: r.u32()? as usize,
            thresholds_per_feature: r.u32()? as usize,
            min_info_gain: r.f64()?,
            min_samples_leaf: r.u32()? as usize,
            split_sample_cap: r.u32()? as usize,
        };
        let tree_count = r.u32()? as usize;
        if tree_count == 0 {
            return Err(r.error(r.at - 4, "forest without trees"));
        }
        let mut trees = Vec::with_capacity(tree_count.min(1024));
        for _ in 0..tree_count {
            let count_at = r.at;
            let node_count = r.u32()? as usize;
            let mut nodes = Vec::with_capacity(node_count.min(1 << 20));
            r.subtree(&mut nodes, dim, node_count)?;
            if nodes.len() != node_count {
                return Err(r.error(
                    count_at,
                    format!("node count {node_count} but tree has {} nodes", nodes.len()),
                ));
            }
            trees.push(Tree { nodes });
        }
        if r.at != bytes.len() {
            return Err(r.error(r.at, "trailing bytes after last tree"));
        }
        Forest::new(trees, dim, features, config)
    }
}

pub fn save_forest(forest: &Forest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, forest.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_forest(path: impl AsRef<Path>) -> Result<Forest> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Forest::from_bytes(&bytes, path)
}

fn put_u32(w: &mut Vec<u8>, x: u32) {
    w.extend_from_slice(&x.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn error(&self, offset: usize, reason: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset: offset as u64,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.at < n {
            return Err(self.error(self.at, format!("unexpected end of file (needed {n} bytes)")));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn subtree(&mut self, nodes: &mut Vec<Node>, dim: usize, limit: usize) -> Result<()> {
        if nodes.len() >= limit {
            return Err(self.error(self.at, "more nodes than the declared node count"));
        }
        let tag_at = self.at;
        match self.u8()? {
            TAG_SPLIT => {
                let mut v = [0f32; 5];
                for x in v.iter_mut() {
                    *x = self.f32()?;
                }
                let at = nodes.len();
                nodes.push(Node::Split {
                    pair: OffsetPair {
                        first: [v[0], v[1]],
                        second: [v[2], v[3]],
                    },
                    threshold: v[4],
                    right: 0,
                });
                self.subtree(nodes, dim, limit)?;
                let right_at = nodes.len() as u32;
                if let Node::Split { right, .. } = &mut nodes[at] {
                    *right = right_at;
                }
                self.subtree(nodes, dim, limit)
            }
            TAG_LEAF => {
                let count = self.u32()?;
                if count == 0 {
                    return Err(self.error(tag_at, "leaf with zero samples"));
                }
                let mut mean = Vec::with_capacity(dim);
                for _ in 0..dim {
                    mean.push(self.f64()?);
                }
                nodes.push(Node::Leaf { mean, count });
                Ok(())
            }
            t => Err(self.error(tag_at, format!("unknown node tag {t}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::train::{train_forest, TrainingSet};
    use crate::features::Anchor;
    use crate::geometry::{DepthImage, Pixel, DEFAULT_BACKGROUND};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trained() -> (Forest, DepthImage) {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let depths = (0..48 * 48)
            .map(|_| if rng.gen_bool(0.2) { DEFAULT_BACKGROUND } else { rng.gen_range(300.0..500.0) })
            .collect();
        let img = DepthImage::new(48, 48, depths, DEFAULT_BACKGROUND).unwrap();
        let mut set = TrainingSet::new(2);
        for (p, d) in img.foreground_pixels() {
            set.push(0, Anchor { pixel: p, depth: d }, &[d / 10.0, p.u as f32]);
        }
        let cfg = ForestConfig {
            tree_count: 3,
            max_depth: 8,
            features_per_split: 20,
            thresholds_per_feature: 10,
            ..ForestConfig::default()
        };
        let f = train_forest(&[&img], &set, &crate::features::FeatureConfig::voting(), &cfg, 2).unwrap();
        (f, img)
    }

    #[test]
    fn round_trip_preserves_predictions() {
        let (f, img) = trained();
        let g = Forest::from_bytes(&f.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(f, g);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let p = Pixel::new(rng.gen_range(0..48), rng.gen_range(0..48));
            let a = f.predict(&img, p).unwrap();
            let b = g.predict(&img, p).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn truncation_reports_offset() {
        let (f, _) = trained();
        let bytes = f.to_bytes();
        for cut in [3, 20, bytes.len() / 2, bytes.len() - 1] {
            match Forest::from_bytes(&bytes[..cut], Path::new("t.hpf")) {
                Err(Error::Format { offset, .. }) => assert!(offset as usize <= cut),
                other => panic!("expected format error, got {other:?}"),
            }
        }
    }

    #[test]
    fn version_mismatch() {
        let (f, _) = trained();
        let mut bytes = f.to_bytes();
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            Forest::from_bytes(&bytes, Path::new("v")),
            Err(Error::Version { found: 7, .. })
        ));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let (f, _) = trained();
        let mut bytes = f.to_bytes();
        bytes.push(0);
        assert!(matches!(
            Forest::from_bytes(&bytes, Path::new("x")),
            Err(Error::Format { .. })
        ));
    }
}
