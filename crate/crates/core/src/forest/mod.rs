//! Regression random forests over depth-difference features.
//!
//! Trees split on `response < threshold` (left) and store at each leaf the
//! mean target of the training samples that reached it. A forest predicts the
//! arithmetic mean of its trees' leaf means.

mod io;
mod train;

use serde::{Deserialize, Serialize};

pub use io::{load_forest, save_forest, FORMAT_VERSION, MAGIC};
pub use train::{bootstrap_indices, train_forest, TrainingSet};

use crate::error::{Error, Result};
use crate::features::{response, Anchor, FeatureConfig, OffsetPair};
use crate::geometry::{DepthImage, Pixel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub tree_count: usize,
    pub max_depth: usize,
    pub features_per_split: usize,
    pub thresholds_per_feature: usize,
    pub min_info_gain: f64,
    pub min_samples_leaf: usize,
    /// Upper bound on the samples scored while searching a node's split;
    /// 0 scores every sample. The chosen split is always applied to, and
    /// re-validated on, the full node.
    pub split_sample_cap: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            tree_count: 8,
            max_depth: 20,
            features_per_split: 200,
            thresholds_per_feature: 50,
            min_info_gain: 1e-6,
            min_samples_leaf: 5,
            split_sample_cap: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tree_count", self.tree_count),
            ("max_depth", self.max_depth),
            ("features_per_split", self.features_per_split),
            ("thresholds_per_feature", self.thresholds_per_feature),
            ("min_samples_leaf", self.min_samples_leaf),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid("forest config", format!("{name} must be positive")));
            }
        }
        if !(self.min_info_gain >= 0.0) {
            return Err(Error::invalid("forest config", "min_info_gain must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Split {
        pair: OffsetPair,
        threshold: f32,
        /// Index of the right child; the left child is the next node.
        right: u32,
    },
    Leaf { mean: Vec<f64>, count: u32 },
}

/// Nodes in pre-order: every split is followed by its left subtree.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(mean: Vec<f64>, count: u32) -> Self {
        Tree {
            nodes: vec![Node::Leaf { mean, count }],
        }
    }

    /// Builds a tree from pre-order nodes, checking child links and leaf dimensions.
    pub fn from_nodes(nodes: Vec<Node>, dim: usize) -> Result<Self> {
        fn walk(nodes: &[Node], at: usize, dim: usize) -> Result<usize> {
            match nodes.get(at) {
                None => Err(Error::invalid("tree", format!("missing node {at}"))),
                Some(Node::Leaf { mean, count }) => {
                    if mean.len() != dim || *count == 0 {
                        return Err(Error::invalid("tree", format!("bad leaf at {at}")));
                    }
                    Ok(at + 1)
                }
                Some(Node::Split { right, .. }) => {
                    let end_left = walk(nodes, at + 1, dim)?;
                    if *right as usize != end_left {
                        return Err(Error::invalid("tree", format!("right link of node {at} is not pre-order")));
                    }
                    walk(nodes, end_left, dim)
                }
            }
        }
        if walk(&nodes, 0, dim)? != nodes.len() {
            return Err(Error::invalid("tree", "unreachable trailing nodes"));
        }
        Ok(Tree { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Index of the leaf reached from `pixel` at `scale` px/mm.
    #[inline]
    pub fn leaf_index(&self, img: &DepthImage, pixel: Pixel, scale: f32) -> usize {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Split { pair, threshold, right } => {
                    at = if response(img, pixel, scale, pair) < *threshold {
                        at + 1
                    } else {
                        *right as usize
                    };
                }
                Node::Leaf { .. } => return at,
            }
        }
    }

    pub fn leaf_mean(&self, node: usize) -> &[f64] {
        match &self.nodes[node] {
            Node::Leaf { mean, .. } => mean,
            Node::Split { .. } => panic!("node {node} is not a leaf"),
        }
    }

    /// Depth of every leaf, root at depth 0, in pre-order.
    pub fn leaf_depths(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, 0usize)];
        while let Some((at, depth)) = stack.pop() {
            match &self.nodes[at] {
                Node::Leaf { .. } => out.push(depth),
                Node::Split { right, .. } => {
                    stack.push((*right as usize, depth + 1));
                    stack.push((at + 1, depth + 1));
                }
            }
        }
        out
    }

    pub fn depth(&self) -> usize {
        self.leaf_depths().into_iter().max().unwrap_or(0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    dim: usize,
    features: FeatureConfig,
    config: ForestConfig,
}

impl Forest {
    pub fn new(trees: Vec<Tree>, dim: usize, features: FeatureConfig, config: ForestConfig) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::invalid("forest", "no trees"));
        }
        for t in &trees {
            for n in &t.nodes {
                if let Node::Leaf { mean, .. } = n {
                    if mean.len() != dim {
                        return Err(Error::invalid("forest", "leaf dimension differs from forest"));
                    }
                }
            }
        }
        Ok(Forest {
            trees,
            dim,
            features,
            config,
        })
    }

    /// Forest of one single-leaf tree that always predicts `value`.
    pub fn constant(value: Vec<f64>, features: FeatureConfig) -> Self {
        let dim = value.len();
        Forest {
            trees: vec![Tree::leaf(value, 1)],
            dim,
            features,
            config: ForestConfig {
                tree_count: 1,
                ..ForestConfig::default()
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn features(&self) -> &FeatureConfig {
        &self.features
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    /// Mean of the trees' leaf predictions for `anchor`, written into `out`.
    pub fn predict_into(&self, img: &DepthImage, anchor: Anchor, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        out.iter_mut().for_each(|o| *o = 0.0);
        let scale = self.features.scale_for(anchor.depth);
        for tree in &self.trees {
            let leaf = tree.leaf_index(img, anchor.pixel, scale);
            for (o, m) in out.iter_mut().zip(tree.leaf_mean(leaf)) {
                *o += m;
            }
        }
        let n = self.trees.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
    }

    pub fn predict_anchor(&self, img: &DepthImage, anchor: Anchor) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.predict_into(img, anchor, &mut out);
        out
    }

    /// Prediction at `pixel`, with offsets scaled by the depth stored there.
    pub fn predict(&self, img: &DepthImage, pixel: Pixel) -> Result<Vec<f64>> {
        img.check_bounds(pixel)?;
        let anchor = Anchor {
            pixel,
            depth: img.depth_or_background(pixel.u, pixel.v),
        };
        Ok(self.predict_anchor(img, anchor))
    }

    /// Each tree's leaf mean for `anchor`, in tree order.
    pub fn tree_predictions(&self, img: &DepthImage, anchor: Anchor) -> Vec<Vec<f64>> {
        let scale = self.features.scale_for(anchor.depth);
        self.trees
            .iter()
            .map(|t| t.leaf_mean(t.leaf_index(img, anchor.pixel, scale)).to_vec())
            .collect()
    }
}

/// Something that predicts a 3D offset (mm) for a foreground pixel.
pub trait OffsetRegressor: Sync {
    fn predict_offset(&self, img: &DepthImage, anchor: Anchor) -> [f64; 3];
}

impl OffsetRegressor for Forest {
    fn predict_offset(&self, img: &DepthImage, anchor: Anchor) -> [f64; 3] {
        let mut out = [0.0; 3];
        self.predict_into(img, anchor, &mut out);
        out
    }
}
