use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Forest, ForestConfig, Node, Tree};
use crate::error::{Error, Result};
use crate::features::{random_offset_pair, response, Anchor, FeatureConfig, OffsetPair};
use crate::geometry::DepthImage;

/// Training samples: an anchor in one of a slice of images plus a target
/// vector of fixed dimension.
#[derive(Clone, Debug, Default)]
pub struct TrainingSet {
    dim: usize,
    images: Vec<u32>,
    anchors: Vec<Anchor>,
    targets: Vec<f32>,
}

impl TrainingSet {
    pub fn new(dim: usize) -> Self {
        TrainingSet {
            dim,
            ..Default::default()
        }
    }

    pub fn with_capacity(dim: usize, capacity: usize) -> Self {
        TrainingSet {
            dim,
            images: Vec::with_capacity(capacity),
            anchors: Vec::with_capacity(capacity),
            targets: Vec::with_capacity(capacity * dim),
        }
    }

    pub fn push(&mut self, image: usize, anchor: Anchor, target: &[f32]) {
        assert_eq!(target.len(), self.dim, "target dimension");
        self.images.push(image as u32);
        self.anchors.push(anchor);
        self.targets.extend_from_slice(target);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn image(&self, i: usize) -> usize {
        self.images[i] as usize
    }

    pub fn anchor(&self, i: usize) -> Anchor {
        self.anchors[i]
    }

    pub fn target(&self, i: usize) -> &[f32] {
        &self.targets[i * self.dim..(i + 1) * self.dim]
    }

    pub fn append(&mut self, other: TrainingSet) {
        assert_eq!(self.dim, other.dim, "target dimension");
        self.images.extend(other.images);
        self.anchors.extend(other.anchors);
        self.targets.extend(other.targets);
    }
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64 + 1);
    rng
}

/// The bootstrap resample (with replacement) that tree `tree` of a forest
/// trained with `seed` on `n` samples is grown from.
pub fn bootstrap_indices(seed: u64, tree: usize, n: usize) -> Vec<u32> {
    let mut rng = tree_rng(seed, tree);
    draw_bootstrap(&mut rng, n)
}

fn draw_bootstrap(rng: &mut ChaCha8Rng, n: usize) -> Vec<u32> {
    (0..n).map(|_| rng.gen_range(0..n as u32)).collect()
}

pub fn train_forest(
    images: &[&DepthImage],
    samples: &TrainingSet,
    features: &FeatureConfig,
    config: &ForestConfig,
    seed: u64,
) -> Result<Forest> {
    config.validate()?;
    features.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyTraining);
    }
    if samples.len() < config.min_samples_leaf {
        return Err(Error::invalid(
            "training set",
            format!(
                "{} samples is fewer than min_samples_leaf {}",
                samples.len(),
                config.min_samples_leaf
            ),
        ));
    }
    if let Some(i) = (0..samples.len()).find(|&i| samples.image(i) >= images.len()) {
        return Err(Error::invalid("training set", format!("sample {i} refers to a missing image")));
    }
    if let Some(i) = samples.targets.iter().position(|t| !t.is_finite()) {
        return Err(Error::Data {
            sample: (i / samples.dim).to_string(),
            reason: "non-finite target".into(),
        });
    }
    let trees = (0..config.tree_count)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(seed, t);
            let mut idx = draw_bootstrap(&mut rng, samples.len());
            let mut grower = Grower::new(images, samples, features, config, rng);
            grower.grow(&mut idx, 0);
            Tree { nodes: grower.nodes }
        })
        .collect();
    Forest::new(trees, samples.dim, *features, *config)
}

struct Candidate {
    gain: f64,
    pair: OffsetPair,
    threshold: f32,
}

struct Grower<'a> {
    images: &'a [&'a DepthImage],
    samples: &'a TrainingSet,
    features: &'a FeatureConfig,
    config: &'a ForestConfig,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    // scratch
    pairs: Vec<OffsetPair>,
    responses: Vec<f32>,
    thresholds: Vec<f32>,
    bin_count: Vec<u32>,
    bin_sum: Vec<f64>,
    bin_sq: Vec<f64>,
}

/// Sum and sum of squared norms of a multiset of targets.
struct Moments {
    n: usize,
    sum: Vec<f64>,
    sq: f64,
}

impl Moments {
    fn sse(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let s2: f64 = self.sum.iter().map(|s| s * s).sum();
        (self.sq - s2 / self.n as f64).max(0.0)
    }
}

impl<'a> Grower<'a> {
    fn new(
        images: &'a [&'a DepthImage],
        samples: &'a TrainingSet,
        features: &'a FeatureConfig,
        config: &'a ForestConfig,
        rng: ChaCha8Rng,
    ) -> Self {
        let dim = samples.dim;
        let bins = config.thresholds_per_feature + 1;
        Grower {
            images,
            samples,
            features,
            config,
            rng,
            nodes: Vec::new(),
            pairs: Vec::with_capacity(config.features_per_split),
            responses: Vec::new(),
            thresholds: Vec::with_capacity(config.thresholds_per_feature),
            bin_count: vec![0; bins],
            bin_sum: vec![0.0; bins * dim],
            bin_sq: vec![0.0; bins],
        }
    }

    fn moments(&self, idx: &[u32]) -> Moments {
        let dim = self.samples.dim;
        let mut m = Moments {
            n: idx.len(),
            sum: vec![0.0; dim],
            sq: 0.0,
        };
        for &i in idx {
            for (s, &t) in m.sum.iter_mut().zip(self.samples.target(i as usize)) {
                let t = t as f64;
                *s += t;
                m.sq += t * t;
            }
        }
        m
    }

    fn push_leaf(&mut self, m: &Moments) {
        let n = m.n as f64;
        self.nodes.push(Node::Leaf {
            mean: m.sum.iter().map(|s| s / n).collect(),
            count: m.n as u32,
        });
    }

    #[inline]
    fn response(&self, sample: usize, pair: &OffsetPair) -> f32 {
        let a = self.samples.anchors[sample];
        let img = self.images[self.samples.images[sample] as usize];
        response(img, a.pixel, self.features.scale_for(a.depth), pair)
    }

    fn grow(&mut self, idx: &mut [u32], depth: usize) {
        let parent = self.moments(idx);
        let min_leaf = self.config.min_samples_leaf;
        if depth >= self.config.max_depth || idx.len() < 2 * min_leaf || parent.sse() <= 0.0 {
            self.push_leaf(&parent);
            return;
        }
        let Some(best) = self.search(idx, &parent) else {
            self.push_leaf(&parent);
            return;
        };

        // apply to the full node and re-validate
        let mut split = 0;
        for i in 0..idx.len() {
            if self.response(idx[i] as usize, &best.pair) < best.threshold {
                idx.swap(i, split);
                split += 1;
            }
        }
        let (left, right) = idx.split_at_mut(split);
        if left.len() < min_leaf || right.len() < min_leaf {
            self.push_leaf(&parent);
            return;
        }
        let (ml, mr) = (self.moments(left), self.moments(right));
        let gain = (parent.sse() - ml.sse() - mr.sse()) / parent.n as f64;
        if !(gain >= self.config.min_info_gain) || gain <= 0.0 {
            self.push_leaf(&parent);
            return;
        }

        let at = self.nodes.len();
        self.nodes.push(Node::Split {
            pair: best.pair,
            threshold: best.threshold,
            right: 0,
        });
        self.grow(left, depth + 1);
        let right_at = self.nodes.len() as u32;
        if let Node::Split { right, .. } = &mut self.nodes[at] {
            *right = right_at;
        }
        self.grow(right, depth + 1);
    }

    /// Best (feature, threshold) by variance reduction over random candidates.
    fn search(&mut self, idx: &[u32], parent: &Moments) -> Option<Candidate> {
        let dim = self.samples.dim;
        let nf = self.config.features_per_split;
        let nt = self.config.thresholds_per_feature;
        let cap = self.config.split_sample_cap;

        let scored: Vec<u32> = if cap > 0 && idx.len() > cap {
            index::sample(&mut self.rng, idx.len(), cap)
                .into_iter()
                .map(|k| idx[k])
                .collect()
        } else {
            idx.to_vec()
        };
        let m = scored.len();
        let stats = if m == idx.len() {
            None
        } else {
            Some(self.moments(&scored))
        };
        let parent = stats.as_ref().unwrap_or(parent);
        let parent_sse = parent.sse();
        // leaf-size check scaled to the scored subset
        let min_side = ((self.config.min_samples_leaf * m) as f64 / idx.len() as f64).ceil().max(1.0) as u32;

        self.pairs.clear();
        for _ in 0..nf {
            let p = random_offset_pair(&mut self.rng, self.features.max_offset_radius);
            self.pairs.push(p);
        }

        // responses[f * m + i]; the outer loop walks samples so the probes
        // of one sample share a cache-resident image patch
        self.responses.clear();
        self.responses.resize(nf * m, 0.0);
        for (i, &s) in scored.iter().enumerate() {
            let a = self.samples.anchors[s as usize];
            let img = self.images[self.samples.images[s as usize] as usize];
            let scale = self.features.scale_for(a.depth);
            for (f, pair) in self.pairs.iter().enumerate() {
                self.responses[f * m + i] = response(img, a.pixel, scale, pair);
            }
        }

        let mut best: Option<Candidate> = None;
        let mut left_sum = vec![0.0f64; dim];
        for f in 0..nf {
            let row = &self.responses[f * m..(f + 1) * m];
            let (lo, hi) = row
                .iter()
                .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)));
            if !(hi > lo) {
                // still consume the thresholds so the rng stream does not depend on data ties
                for _ in 0..nt {
                    let _: f32 = self.rng.gen();
                }
                continue;
            }
            self.thresholds.clear();
            for _ in 0..nt {
                let u: f32 = self.rng.gen();
                self.thresholds.push(lo + u * (hi - lo));
            }
            self.thresholds.sort_by(|a, b| a.total_cmp(b));

            self.bin_count.iter_mut().for_each(|c| *c = 0);
            self.bin_sum.iter_mut().for_each(|c| *c = 0.0);
            self.bin_sq.iter_mut().for_each(|c| *c = 0.0);
            for (i, &r) in row.iter().enumerate() {
                // sample goes left of threshold j iff r < t_j, i.e. j >= k
                let k = self.thresholds.partition_point(|&t| t <= r);
                self.bin_count[k] += 1;
                let target = self.samples.target(scored[i] as usize);
                let sums = &mut self.bin_sum[k * dim..(k + 1) * dim];
                let mut sq = 0.0;
                for (s, &t) in sums.iter_mut().zip(target) {
                    let t = t as f64;
                    *s += t;
                    sq += t * t;
                }
                self.bin_sq[k] += sq;
            }

            let mut left_n = 0u32;
            let mut left_sq = 0.0;
            left_sum.iter_mut().for_each(|s| *s = 0.0);
            for j in 0..nt {
                left_n += self.bin_count[j];
                left_sq += self.bin_sq[j];
                for (s, b) in left_sum.iter_mut().zip(&self.bin_sum[j * dim..(j + 1) * dim]) {
                    *s += b;
                }
                let right_n = m as u32 - left_n;
                if left_n < min_side || right_n < min_side {
                    continue;
                }
                let l2: f64 = left_sum.iter().map(|s| s * s).sum();
                let r2: f64 = left_sum
                    .iter()
                    .zip(&parent.sum)
                    .map(|(l, p)| (p - l) * (p - l))
                    .sum();
                let sse_l = (left_sq - l2 / left_n as f64).max(0.0);
                let sse_r = (parent.sq - left_sq - r2 / right_n as f64).max(0.0);
                let gain = (parent_sse - sse_l - sse_r) / m as f64;
                if gain >= self.config.min_info_gain && best.as_ref().map_or(true, |b| gain > b.gain) {
                    best = Some(Candidate {
                        gain,
                        pair: self.pairs[f],
                        threshold: self.thresholds[j],
                    });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pixel, DEFAULT_BACKGROUND};

    fn halves(left: f32, right: f32) -> DepthImage {
        let depths = (0..32 * 32)
            .map(|i| if i % 32 < 16 { left } else { right })
            .collect();
        DepthImage::new(32, 32, depths, DEFAULT_BACKGROUND).unwrap()
    }

    fn unscaled() -> FeatureConfig {
        FeatureConfig {
            max_offset_radius: 12.0,
            depth_normalize: false,
            focal_length: 1.0,
            reference_depth: 1.0,
        }
    }

    #[test]
    fn identical_targets_give_single_leaves() {
        let img = halves(300.0, 600.0);
        let images = [&img];
        let mut set = TrainingSet::new(3);
        for k in 0..10 {
            let a = Anchor {
                pixel: Pixel::new(10 + k, 16),
                depth: 300.0,
            };
            set.push(0, a, &[1.0, 2.0, 3.0]);
        }
        let f = train_forest(&images, &set, &unscaled(), &ForestConfig::default(), 5).unwrap();
        assert_eq!(f.trees().len(), 8);
        for t in f.trees() {
            assert_eq!(t.nodes().len(), 1);
            assert_eq!(t.leaf_mean(0), &[1.0, 2.0, 3.0]);
        }
    }

    #[test]
    fn two_clusters_split_once() {
        // cluster A: near side on the left; cluster B: mirrored
        let a = halves(300.0, 600.0);
        let b = halves(600.0, 300.0);
        let images = [&a, &b];
        let mut set = TrainingSet::new(3);
        for k in 0..100 {
            let anchor = Anchor {
                pixel: Pixel::new(16, (k % 20) as i32 + 6),
                depth: 400.0,
            };
            if k % 2 == 0 {
                set.push(0, anchor, &[0.0, 0.0, 0.0]);
            } else {
                set.push(1, anchor, &[10.0, 0.0, 0.0]);
            }
        }
        let f = train_forest(&images, &set, &unscaled(), &ForestConfig::default(), 9).unwrap();
        for t in f.trees() {
            assert_eq!(t.depth(), 1);
            let means: Vec<_> = t
                .nodes()
                .iter()
                .filter_map(|n| match n {
                    Node::Leaf { mean, .. } => Some(mean.clone()),
                    _ => None,
                })
                .collect();
            assert_eq!(means.len(), 2);
            assert!(means.contains(&vec![0.0, 0.0, 0.0]));
            assert!(means.contains(&vec![10.0, 0.0, 0.0]));
        }
        let pa = f.predict_anchor(&a, set.anchor(0));
        let pb = f.predict_anchor(&b, set.anchor(1));
        assert_eq!(pa, vec![0.0, 0.0, 0.0]);
        assert_eq!(pb, vec![10.0, 0.0, 0.0]);
    }

    #[test]
    fn training_errors() {
        let img = halves(300.0, 600.0);
        let images = [&img];
        let set = TrainingSet::new(3);
        assert!(matches!(
            train_forest(&images, &set, &unscaled(), &ForestConfig::default(), 1),
            Err(Error::EmptyTraining)
        ));
        let mut set = TrainingSet::new(1);
        set.push(
            3,
            Anchor {
                pixel: Pixel::new(0, 0),
                depth: 300.0,
            },
            &[0.0],
        );
        let cfg = ForestConfig {
            min_samples_leaf: 1,
            ..ForestConfig::default()
        };
        assert!(train_forest(&images, &set, &unscaled(), &cfg, 1).is_err());
    }

    #[test]
    fn bootstrap_is_reproducible() {
        let a = bootstrap_indices(3, 2, 100);
        assert_eq!(a, bootstrap_indices(3, 2, 100));
        assert_ne!(a, bootstrap_indices(3, 1, 100));
        assert!(a.iter().all(|&i| i < 100));
    }
}
