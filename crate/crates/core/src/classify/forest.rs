//! Random forest of fully grown CART trees with Gini splits.
//!
//! Trees are grown until leaves are pure or unsplittable, on bootstrap
//! resamples of the training set, with `m_try` candidate features drawn
//! without replacement at every node. All randomness flows from one `u64`
//! seed: tree `t` uses its own generator seeded with `seed ^ t`, so the
//! ensemble is bit-identical no matter how many worker threads build it.

use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// One tree node. Children are stored as indices into the tree's node list;
/// children always precede their parent, so the root is the last node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        /// Bootstrap training counts per class at this leaf.
        counts: Vec<u32>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RfModel {
    pub trees: Vec<Tree>,
    pub m_try: usize,
    pub seed: u64,
    pub n_classes: usize,
    pub n_features: usize,
}

impl RfModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

struct TreeCtx<'a> {
    features: &'a Mat,
    labels: &'a [usize],
    n_classes: usize,
    m_try: usize,
}

/// Train a forest on samples stored as the columns of `features`
/// (n_features x n). `labels` are class ids in `0..n_classes`; the class
/// count is explicit so folds that happen to miss a class still produce
/// models with a full vote vector.
pub fn rf_train(
    features: &Mat,
    labels: &[usize],
    n_classes: usize,
    n_trees: usize,
    m_try: usize,
    seed: u64,
) -> Result<RfModel> {
    let n = features.cols();
    let d = features.rows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            context: "forest labels",
            expected: n,
            got: labels.len(),
        });
    }
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument(
            "forest training needs at least one sample and one feature".into(),
        ));
    }
    if n_classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "forest needs at least 2 classes, got {n_classes}"
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(Error::InvalidArgument(format!(
            "label {y} out of range for {n_classes} classes"
        )));
    }
    if n_trees == 0 {
        return Err(Error::InvalidArgument("forest needs at least one tree".into()));
    }
    if m_try == 0 || m_try > d {
        return Err(Error::InvalidArgument(format!(
            "m_try must lie in 1..={d}, got {m_try}"
        )));
    }
    if features.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "forest features must be finite".into(),
        ));
    }

    let ctx = TreeCtx {
        features,
        labels,
        n_classes,
        m_try,
    };
    let trees: Vec<Tree> = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ t as u64);
            build_tree(&ctx, &mut rng)
        })
        .collect();
    Ok(RfModel {
        trees,
        m_try,
        seed,
        n_classes,
        n_features: d,
    })
}

fn build_tree(ctx: &TreeCtx, rng: &mut ChaCha8Rng) -> Tree {
    let n = ctx.features.cols();
    let bootstrap: Vec<u32> = (0..n).map(|_| rng.random_range(0..n) as u32).collect();
    let mut nodes = Vec::new();
    grow(ctx, rng, bootstrap, &mut nodes);
    Tree { nodes }
}

fn grow(ctx: &TreeCtx, rng: &mut ChaCha8Rng, samples: Vec<u32>, nodes: &mut Vec<Node>) -> u32 {
    let mut counts = vec![0u32; ctx.n_classes];
    for &i in &samples {
        counts[ctx.labels[i as usize]] += 1;
    }
    let mixed = counts.iter().filter(|&&c| c > 0).count() > 1;
    let split = if mixed {
        best_split(ctx, rng, &samples, &counts)
    } else {
        None
    };
    match split {
        Some((feature, threshold)) => {
            let (l, r): (Vec<u32>, Vec<u32>) = samples
                .into_iter()
                .partition(|&i| ctx.features.get(feature, i as usize) <= threshold);
            let left = grow(ctx, rng, l, nodes);
            let right = grow(ctx, rng, r, nodes);
            nodes.push(Node::Split {
                feature: feature as u32,
                threshold,
                left,
                right,
            });
        }
        None => nodes.push(Node::Leaf { counts }),
    }
    (nodes.len() - 1) as u32
}

/// Pick the (feature, threshold) maximizing `sum c_l^2/n_l + sum c_r^2/n_r`
/// over `m_try` sampled features — equivalent to the largest Gini impurity
/// decrease. Candidate features are scanned in ascending order, thresholds
/// left to right, and only a strictly greater score displaces the incumbent,
/// so ties resolve to the first candidate deterministically. Returns `None`
/// when no split beats the parent (e.g. all candidate values coincide).
fn best_split(
    ctx: &TreeCtx,
    rng: &mut ChaCha8Rng,
    samples: &[u32],
    counts: &[u32],
) -> Option<(usize, f64)> {
    let n = samples.len() as f64;
    let parent: u64 = counts.iter().map(|&c| u64::from(c) * u64::from(c)).sum();
    let mut best_s = parent as f64 / n;
    let mut best = None;
    let mut chosen = index::sample(rng, ctx.features.rows(), ctx.m_try).into_vec();
    chosen.sort_unstable();
    let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(samples.len());
    let mut left = vec![0u32; ctx.n_classes];
    for f in chosen {
        pairs.clear();
        pairs.extend(
            samples
                .iter()
                .map(|&i| (ctx.features.get(f, i as usize), ctx.labels[i as usize])),
        );
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        left.iter_mut().for_each(|c| *c = 0);
        // Incremental sums of squared counts while samples move left.
        let mut sum_l: u64 = 0;
        let mut sum_r: u64 = parent;
        for w in 0..pairs.len() - 1 {
            let c = pairs[w].1;
            sum_l += 2 * u64::from(left[c]) + 1;
            sum_r -= 2 * u64::from(counts[c] - left[c]) - 1;
            left[c] += 1;
            if pairs[w].0 < pairs[w + 1].0 {
                let nl = (w + 1) as f64;
                let s = sum_l as f64 / nl + sum_r as f64 / (n - nl);
                if s > best_s {
                    best_s = s;
                    best = Some((f, midpoint(pairs[w].0, pairs[w + 1].0)));
                }
            }
        }
    }
    best
}

/// Midpoint of two distinct finite values, nudged down to `lo` in the
/// adjacent-float edge case so that `value <= threshold` routes exactly the
/// sorted prefix left.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo / 2.0 + hi / 2.0;
    if m < hi {
        m
    } else {
        lo
    }
}

fn argmax_smallest(counts: &[u32]) -> usize {
    let mut best = 0;
    for (c, &v) in counts.iter().enumerate() {
        if v > counts[best] {
            best = c;
        }
    }
    best
}

/// Majority vote over the forest. Each tree votes its leaf's plurality class;
/// all ties (within a leaf and between vote totals) resolve to the smallest
/// class id. Returns the predicted class and the per-class vote tally.
pub fn rf_predict(model: &RfModel, x: &[f64]) -> Result<(usize, Vec<u32>)> {
    if x.len() != model.n_features {
        return Err(Error::DimensionMismatch {
            context: "forest prediction",
            expected: model.n_features,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "forest prediction input must be finite".into(),
        ));
    }
    let mut votes = vec![0u32; model.n_classes];
    for tree in &model.trees {
        let mut at = tree.nodes.len() - 1;
        loop {
            match &tree.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                Node::Leaf { counts } => {
                    votes[argmax_smallest(counts)] += 1;
                    break;
                }
            }
        }
    }
    Ok((argmax_smallest(&votes), votes))
}

/// Vote margin for the true class: `(votes[y] - max_{j != y} votes[j]) / T`
/// where `T` is the total vote count. Positive means the forest prefers the
/// true class outright; zero means a tie at the top.
pub fn rf_margin(votes: &[u32], true_class: usize) -> Result<f64> {
    if true_class >= votes.len() {
        return Err(Error::InvalidArgument(format!(
            "true class {true_class} out of range for {} vote slots",
            votes.len()
        )));
    }
    let total: u64 = votes.iter().map(|&v| u64::from(v)).sum();
    if total == 0 {
        return Err(Error::InvalidArgument("empty vote tally".into()));
    }
    let rival = votes
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != true_class)
        .map(|(_, &v)| v)
        .max()
        .unwrap_or(0);
    Ok((f64::from(votes[true_class]) - f64::from(rival)) / total as f64)
}

const MAGIC: &[u8; 4] = b"EPRF";
const VERSION: u32 = 1;

pub fn save_forest(model: &RfModel, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for v in [
        model.trees.len() as u32,
        model.m_try as u32,
        model.n_classes as u32,
        model.n_features as u32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&model.seed.to_le_bytes());
    for tree in &model.trees {
        buf.extend_from_slice(&(tree.nodes.len() as u32).to_le_bytes());
        for node in &tree.nodes {
            match node {
                Node::Leaf { counts } => {
                    buf.push(0);
                    for c in counts {
                        buf.extend_from_slice(&c.to_le_bytes());
                    }
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    buf.push(1);
                    buf.extend_from_slice(&feature.to_le_bytes());
                    buf.extend_from_slice(&threshold.to_le_bytes());
                    buf.extend_from_slice(&left.to_le_bytes());
                    buf.extend_from_slice(&right.to_le_bytes());
                }
            }
        }
    }
    std::fs::write(path, buf).map_err(|source| Error::FileWrite {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_forest(path: &Path) -> Result<RfModel> {
    let bytes = std::fs::read(path).map_err(|source| Error::FileRead {
        path: path.to_path_buf(),
        source,
    })?;
    let mut r = Reader {
        bytes: &bytes,
        at: 0,
        path,
    };
    let mut magic = [0u8; 4];
    magic.copy_from_slice(r.take(4, "magic")?);
    if &magic != MAGIC {
        return Err(r.bad("bad magic"));
    }
    if r.u32("version")? != VERSION {
        return Err(r.bad("unsupported version"));
    }
    let n_trees = r.u32("tree count")? as usize;
    let m_try = r.u32("m_try")? as usize;
    let n_classes = r.u32("class count")? as usize;
    let n_features = r.u32("feature count")? as usize;
    let seed = u64::from_le_bytes(r.take(8, "seed")?.try_into().unwrap());
    if n_classes < 2 || n_features == 0 || m_try == 0 || m_try > n_features {
        return Err(r.bad("inconsistent header"));
    }
    let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
    for _ in 0..n_trees {
        let n_nodes = r.u32("node count")? as usize;
        if n_nodes == 0 {
            return Err(r.bad("empty tree"));
        }
        let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
        for idx in 0..n_nodes {
            let node = match r.take(1, "node tag")?[0] {
                0 => {
                    let mut counts = Vec::with_capacity(n_classes);
                    for _ in 0..n_classes {
                        counts.push(r.u32("leaf count")?);
                    }
                    Node::Leaf { counts }
                }
                1 => {
                    let feature = r.u32("split feature")?;
                    let threshold =
                        f64::from_le_bytes(r.take(8, "split threshold")?.try_into().unwrap());
                    let left = r.u32("left child")?;
                    let right = r.u32("right child")?;
                    if feature as usize >= n_features || !threshold.is_finite() {
                        return Err(r.bad("invalid split"));
                    }
                    // Children precede parents, which rules out cycles.
                    if left as usize >= idx || right as usize >= idx {
                        return Err(r.bad("child index out of order"));
                    }
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    }
                }
                _ => return Err(r.bad("unknown node tag")),
            };
            nodes.push(node);
        }
        trees.push(Tree { nodes });
    }
    if r.at != bytes.len() {
        return Err(r.bad("trailing bytes"));
    }
    Ok(RfModel {
        trees,
        m_try,
        seed,
        n_classes,
        n_features,
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn bad(&self, detail: &str) -> Error {
        Error::Data(format!(
            "forest model file `{}` is invalid: {detail}",
            self.path.display()
        ))
    }

    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.at < len {
            return Err(self.bad(&format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.at..self.at + len];
        self.at += len;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols(samples: &[Vec<f64>]) -> Mat {
        Mat::from_cols(samples).unwrap()
    }

    /// Three well-separated 2-D clusters, 20 points each.
    fn blobs() -> (Mat, Vec<usize>) {
        let centers = [(0.0, 0.0), (6.0, 0.0), (0.0, 6.0)];
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        for (class, (cx, cy)) in centers.iter().enumerate() {
            for i in 0..20 {
                let dx = 0.08 * f64::from(i as i32 % 5 - 2);
                let dy = 0.08 * f64::from(i as i32 / 5 - 2);
                samples.push(vec![cx + dx, cy + dy]);
                labels.push(class);
            }
        }
        (cols(&samples), labels)
    }

    #[test]
    fn vote_margin_matches_hand_value() {
        assert_eq!(rf_margin(&[6, 3, 1], 0).unwrap(), 0.3);
        assert_eq!(rf_margin(&[6, 3, 1], 1).unwrap(), -0.3);
        assert_eq!(rf_margin(&[5, 5], 0).unwrap(), 0.0);
        assert!(rf_margin(&[1, 2], 2).is_err());
        assert!(rf_margin(&[0, 0], 0).is_err());
    }

    #[test]
    fn single_feature_step_splits_at_midpoint() {
        let x = cols(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let labels = vec![0usize, 0, 1, 1];
        let ctx = TreeCtx {
            features: &x,
            labels: &labels,
            n_classes: 2,
            m_try: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (feature, threshold) =
            best_split(&ctx, &mut rng, &[0, 1, 2, 3], &[2, 2]).unwrap();
        assert_eq!(feature, 0);
        assert_eq!(threshold, 1.5);
    }

    #[test]
    fn cleaner_feature_wins_the_split() {
        // Feature 0 separates perfectly; feature 1 leaves one impurity.
        let samples = vec![
            vec![0.0, 0.0],
            vec![0.1, 1.0],
            vec![0.2, 2.0],
            vec![1.0, 3.0],
            vec![1.1, 1.5],
            vec![1.2, 5.0],
        ];
        let labels = vec![0usize, 0, 0, 1, 1, 1];
        let x = cols(&samples);
        let ctx = TreeCtx {
            features: &x,
            labels: &labels,
            n_classes: 2,
            m_try: 2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (feature, threshold) =
            best_split(&ctx, &mut rng, &[0, 1, 2, 3, 4, 5], &[3, 3]).unwrap();
        assert_eq!(feature, 0);
        assert!((threshold - 0.6).abs() < 1e-12);
    }

    #[test]
    fn constant_features_make_a_leaf() {
        let x = cols(&[vec![1.0], vec![1.0], vec![1.0]]);
        let labels = vec![0usize, 1, 0];
        let model = rf_train(&x, &labels, 2, 3, 1, 7).unwrap();
        for tree in &model.trees {
            assert_eq!(tree.nodes.len(), 1);
            assert!(matches!(tree.nodes[0], Node::Leaf { .. }));
        }
    }

    #[test]
    fn separated_clusters_classify_cleanly() {
        let (x, labels) = blobs();
        let model = rf_train(&x, &labels, 3, 50, 1, 42).unwrap();
        let mut correct = 0;
        for (i, &y) in labels.iter().enumerate() {
            let (pred, votes) = rf_predict(&model, x.col(i)).unwrap();
            if pred == y {
                correct += 1;
            }
            let margin = rf_margin(&votes, y).unwrap();
            assert!((-1.0..=1.0).contains(&margin));
            if margin > 0.0 {
                assert_eq!(pred, y);
            }
            if margin < 0.0 {
                assert_ne!(pred, y);
            }
        }
        assert!(correct >= 57, "only {correct}/60 training points correct");
    }

    #[test]
    fn worker_count_does_not_change_the_model() {
        let (x, labels) = blobs();
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| rf_train(&x, &labels, 3, 16, 2, 99).unwrap());
        let eight = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap()
            .install(|| rf_train(&x, &labels, 3, 16, 2, 99).unwrap());
        assert_eq!(single, eight);
        let again = rf_train(&x, &labels, 3, 16, 2, 99).unwrap();
        assert_eq!(single, again);
        let other_seed = rf_train(&x, &labels, 3, 16, 2, 100).unwrap();
        assert_ne!(single, other_seed);
    }

    #[test]
    fn ties_resolve_to_the_smallest_class() {
        let leaf = |counts: Vec<u32>| Tree {
            nodes: vec![Node::Leaf { counts }],
        };
        let model = RfModel {
            trees: vec![leaf(vec![1, 1, 0]), leaf(vec![0, 0, 5])],
            m_try: 1,
            seed: 0,
            n_classes: 3,
            n_features: 2,
        };
        // First leaf ties 0-vs-1 -> votes class 0; second votes class 2;
        // the 1-1 overall tie then resolves to class 0.
        let (pred, votes) = rf_predict(&model, &[0.0, 0.0]).unwrap();
        assert_eq!(votes, vec![1, 0, 1]);
        assert_eq!(pred, 0);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let x = cols(&[vec![0.0], vec![1.0]]);
        assert!(rf_train(&x, &[0, 1], 2, 0, 1, 0).is_err());
        assert!(rf_train(&x, &[0, 1], 2, 1, 2, 0).is_err());
        assert!(rf_train(&x, &[0, 1], 2, 1, 0, 0).is_err());
        assert!(rf_train(&x, &[0, 2], 2, 1, 1, 0).is_err());
        assert!(rf_train(&x, &[0], 2, 1, 1, 0).is_err());
        assert!(rf_train(&x, &[0, 1], 1, 1, 1, 0).is_err());
        let bad = cols(&[vec![f64::INFINITY], vec![1.0]]);
        assert!(rf_train(&bad, &[0, 1], 2, 1, 1, 0).is_err());
        let model = rf_train(&x, &[0, 1], 2, 1, 1, 0).unwrap();
        assert!(rf_predict(&model, &[1.0, 2.0]).is_err());
        assert!(rf_predict(&model, &[f64::NAN]).is_err());
    }

    #[test]
    fn model_round_trips_through_disk() {
        let (x, labels) = blobs();
        let model = rf_train(&x, &labels, 3, 8, 2, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("forest.bin");
        save_forest(&model, &path).unwrap();
        let back = load_forest(&path).unwrap();
        assert_eq!(back, model);

        let good = std::fs::read(&path).unwrap();
        let mut truncated = good.clone();
        truncated.truncate(good.len() - 3);
        std::fs::write(&path, truncated).unwrap();
        assert!(matches!(load_forest(&path).unwrap_err(), Error::Data(_)));

        let mut trailing = good.clone();
        trailing.push(0);
        std::fs::write(&path, trailing).unwrap();
        assert!(matches!(load_forest(&path).unwrap_err(), Error::Data(_)));
    }

    #[test]
    fn load_rejects_forward_child_references() {
        // Hand-assembled single-tree file whose split points at itself.
        let mut buf = Vec::new();
        buf.extend_from_slice(b"EPRF");
        buf.extend_from_slice(&1u32.to_le_bytes());
        for v in [1u32, 1, 2, 1] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&0u64.to_le_bytes());
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.push(1);
        buf.extend_from_slice(&0u32.to_le_bytes());
        buf.extend_from_slice(&0.5f64.to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cyclic.bin");
        std::fs::write(&path, buf).unwrap();
        let err = load_forest(&path).unwrap_err();
        assert!(err.to_string().contains("out of order"), "{err}");
    }
}
