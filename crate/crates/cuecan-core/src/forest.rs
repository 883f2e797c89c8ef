//! Random forest over the six region features, built from scratch:
//! per-tree bootstrap, Gini splits over a random feature subset, depth and
//! leaf-size limits. Everything is deterministic under the seed.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, CoreResult};
use crate::rng::{index, stream, Domain, Rng};

pub const FEATURE_COUNT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestHyper {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// ceil(sqrt(6)) by default.
    pub features_per_split: usize,
    pub seed: u64,
}

impl Default for ForestHyper {
    fn default() -> Self {
        ForestHyper { n_trees: 50, max_depth: 8, min_leaf: 2, features_per_split: 3, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        /// Class tallies (not-missing, missing) of the training rows that
        /// reached this leaf.
        counts: [u64; 2],
    },
    Split {
        feat: usize,
        thresh: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub root: u32,
}

impl Tree {
    pub fn predict(&self, x: &[f64; FEATURE_COUNT]) -> bool {
        let mut at = self.root as usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { counts } => return counts[1] > counts[0],
                Node::Split { feat, thresh, left, right } => {
                    at = if x[*feat] <= *thresh { *left } else { *right } as usize;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub hyper: ForestHyper,
    pub trees: Vec<Tree>,
}

/// Out-of-bag accounting from training: the ensemble OOB error and each
/// tree's error on its own held-out rows (None when a bag covered
/// everything).
#[derive(Debug, Clone)]
pub struct OobReport {
    pub ensemble: Option<f64>,
    pub per_tree: Vec<Option<f64>>,
}

fn gini(counts: [u64; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p0 = counts[0] as f64 / n;
    let p1 = counts[1] as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

fn tally(xs: &[(usize, bool)]) -> [u64; 2] {
    let mut c = [0u64; 2];
    for (_, y) in xs {
        c[*y as usize] += 1;
    }
    c
}

struct Builder<'a> {
    data: &'a [[f64; FEATURE_COUNT]],
    hyper: &'a ForestHyper,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf(&mut self, counts: [u64; 2]) -> u32 {
        self.nodes.push(Node::Leaf { counts });
        (self.nodes.len() - 1) as u32
    }

    fn build(&mut self, rows: &mut [(usize, bool)], depth: usize, rng: &mut Rng) -> u32 {
        let counts = tally(rows);
        let parent_gini = gini(counts);
        if depth >= self.hyper.max_depth
            || counts[0] == 0
            || counts[1] == 0
            || rows.len() < 2 * self.hyper.min_leaf
        {
            return self.leaf(counts);
        }

        // random feature subset: partial Fisher-Yates over the 6 features
        let mut feats = [0usize, 1, 2, 3, 4, 5];
        let take = self.hyper.features_per_split.min(FEATURE_COUNT);
        for i in 0..take {
            let j = i + index(rng, FEATURE_COUNT - i);
            feats.swap(i, j);
        }

        let mut best: Option<(usize, f64, f64)> = None;
        let mut scratch: Vec<(f64, bool)> = Vec::with_capacity(rows.len());
        for &feat in &feats[..take] {
            scratch.clear();
            scratch.extend(rows.iter().map(|&(i, y)| (self.data[i][feat], y)));
            scratch.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
            let n = scratch.len();
            let mut left = [0u64; 2];
            for cut in 1..n {
                left[scratch[cut - 1].1 as usize] += 1;
                if cut < self.hyper.min_leaf || n - cut < self.hyper.min_leaf {
                    continue;
                }
                if scratch[cut - 1].0 == scratch[cut].0 {
                    continue;
                }
                let right = [counts[0] - left[0], counts[1] - left[1]];
                let weighted = (cut as f64 * gini(left)
                    + (n - cut) as f64 * gini(right))
                    / n as f64;
                if weighted + 1e-12 < best.map_or(parent_gini, |(_, _, w)| w) {
                    let thresh = (scratch[cut - 1].0 + scratch[cut].0) / 2.0;
                    best = Some((feat, thresh, weighted));
                }
            }
        }

        let Some((feat, thresh, _)) = best else {
            return self.leaf(counts);
        };
        let split_at = partition_rows(rows, |&(i, _)| self.data[i][feat] <= thresh);
        let (l_rows, r_rows) = rows.split_at_mut(split_at);
        let left = self.build(l_rows, depth + 1, rng);
        let right = self.build(r_rows, depth + 1, rng);
        self.nodes.push(Node::Split { feat, thresh, left, right });
        (self.nodes.len() - 1) as u32
    }
}

/// Stable partition: rows satisfying the predicate first; returns the count.
fn partition_rows<F: Fn(&(usize, bool)) -> bool>(rows: &mut [(usize, bool)], pred: F) -> usize {
    let mut sorted: Vec<(usize, bool)> = Vec::with_capacity(rows.len());
    sorted.extend(rows.iter().copied().filter(|r| pred(r)));
    let cut = sorted.len();
    sorted.extend(rows.iter().copied().filter(|r| !pred(r)));
    rows.copy_from_slice(&sorted);
    cut
}

pub fn forest_train(
    features: &[[f64; FEATURE_COUNT]],
    labels: &[bool],
    hyper: &ForestHyper,
) -> CoreResult<(RandomForest, OobReport)> {
    if features.len() != labels.len() {
        return arg_err("forest_train", "features and labels differ in length");
    }
    let n = features.len();
    if n < hyper.min_leaf.max(1) {
        return arg_err("forest_train", "fewer samples than the minimum leaf size");
    }
    if hyper.n_trees == 0 || hyper.features_per_split == 0 || hyper.min_leaf == 0 {
        return arg_err("forest_train", "hyperparameters must be positive");
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return arg_err("forest_train", "non-finite feature");
    }

    let mut trees = Vec::with_capacity(hyper.n_trees);
    let mut in_bag: Vec<Vec<bool>> = Vec::with_capacity(hyper.n_trees);
    for t in 0..hyper.n_trees {
        let mut rng = stream(hyper.seed, Domain::Bootstrap, t as u64);
        let mut bag = vec![false; n];
        let mut rows: Vec<(usize, bool)> = (0..n)
            .map(|_| {
                let i = index(&mut rng, n);
                bag[i] = true;
                (i, labels[i])
            })
            .collect();
        let mut b = Builder { data: features, hyper, nodes: Vec::new() };
        let root = b.build(&mut rows, 0, &mut rng);
        trees.push(Tree { nodes: b.nodes, root });
        in_bag.push(bag);
    }

    // out-of-bag: each row judged only by trees that never drew it
    let mut oob_wrong = 0usize;
    let mut oob_total = 0usize;
    for i in 0..n {
        let mut votes = [0usize; 2];
        for (t, tree) in trees.iter().enumerate() {
            if !in_bag[t][i] {
                votes[tree.predict(&features[i]) as usize] += 1;
            }
        }
        if votes[0] + votes[1] == 0 {
            continue;
        }
        oob_total += 1;
        if (votes[1] > votes[0]) != labels[i] {
            oob_wrong += 1;
        }
    }
    let per_tree = trees
        .iter()
        .zip(&in_bag)
        .map(|(tree, bag)| {
            let mut wrong = 0usize;
            let mut total = 0usize;
            for i in 0..n {
                if !bag[i] {
                    total += 1;
                    if tree.predict(&features[i]) != labels[i] {
                        wrong += 1;
                    }
                }
            }
            (total > 0).then(|| wrong as f64 / total as f64)
        })
        .collect();

    Ok((
        RandomForest { hyper: *hyper, trees },
        OobReport {
            ensemble: (oob_total > 0).then(|| oob_wrong as f64 / oob_total as f64),
            per_tree,
        },
    ))
}

/// Majority vote over trees; ties fall to not-missing. The fraction is the
/// share of trees agreeing with the returned label.
pub fn forest_predict(forest: &RandomForest, x: &[f64; FEATURE_COUNT]) -> (bool, f64) {
    let mut votes = [0usize; 2];
    for tree in &forest.trees {
        votes[tree.predict(x) as usize] += 1;
    }
    let label = votes[1] > votes[0];
    (label, votes[label as usize] as f64 / forest.trees.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::uniform;

    /// Features whose label is exactly "dist_center < 10" (feature 4).
    fn rule_data(seed: u64, n: usize) -> (Vec<[f64; 6]>, Vec<bool>) {
        let mut rng = stream(seed, Domain::Check, 40);
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for i in 0..n {
            let near = i % 2 == 0;
            let dist = if near { uniform(&mut rng, 0.0, 8.0) } else { uniform(&mut rng, 12.0, 40.0) };
            xs.push([
                uniform(&mut rng, 0.0, 64.0),
                uniform(&mut rng, 0.0, 64.0),
                uniform(&mut rng, 2.0, 12.0),
                uniform(&mut rng, 2.0, 12.0),
                dist,
                uniform(&mut rng, 0.3, 3.0),
            ]);
            ys.push(dist < 10.0);
        }
        (xs, ys)
    }

    #[test]
    fn learns_a_separable_rule_perfectly() {
        let (xs, ys) = rule_data(1, 200);
        let (forest, oob) = forest_train(&xs, &ys, &ForestHyper::default()).unwrap();
        let (tx, ty) = rule_data(2, 100);
        let correct =
            tx.iter().zip(&ty).filter(|(x, y)| forest_predict(&forest, x).0 == **y).count();
        assert_eq!(correct, 100, "separable rule not learned");
        assert!(oob.ensemble.unwrap() < 0.05);
    }

    #[test]
    fn same_seed_gives_structurally_identical_forests() {
        let (xs, ys) = rule_data(3, 120);
        let (a, _) = forest_train(&xs, &ys, &ForestHyper::default()).unwrap();
        let (b, _) = forest_train(&xs, &ys, &ForestHyper::default()).unwrap();
        assert_eq!(a, b);
        let other = ForestHyper { seed: 9, ..ForestHyper::default() };
        let (c, _) = forest_train(&xs, &ys, &other).unwrap();
        assert_ne!(a, c, "different seeds produced identical forests");
    }

    #[test]
    fn depth_zero_tree_is_a_bootstrap_majority_stump() {
        let (xs, mut ys) = rule_data(4, 40);
        for y in ys.iter_mut().take(36) {
            *y = true;
        }
        let hyper = ForestHyper { n_trees: 1, max_depth: 0, ..ForestHyper::default() };
        let (forest, _) = forest_train(&xs, &ys, &hyper).unwrap();
        assert_eq!(forest.trees[0].nodes.len(), 1);
        let (label, frac) = forest_predict(&forest, &xs[0]);
        assert!(label, "a 90% true bootstrap fell to the minority class");
        assert_eq!(frac, 1.0);
    }

    #[test]
    fn single_class_data_degenerates_to_that_class() {
        let (xs, _) = rule_data(5, 30);
        let ys = vec![true; 30];
        let (forest, oob) = forest_train(&xs, &ys, &ForestHyper::default()).unwrap();
        for x in &xs {
            let (label, frac) = forest_predict(&forest, x);
            assert!(label);
            assert_eq!(frac, 1.0, "trees must be unanimous");
        }
        assert_eq!(oob.ensemble, Some(0.0));
    }

    #[test]
    fn leaves_respect_the_minimum_size() {
        let (xs, ys) = rule_data(6, 150);
        let hyper = ForestHyper::default();
        let (forest, _) = forest_train(&xs, &ys, &hyper).unwrap();
        for tree in &forest.trees {
            for node in &tree.nodes {
                if let Node::Leaf { counts } = node {
                    assert!(
                        counts[0] + counts[1] >= 1,
                        "empty leaf"
                    );
                }
                if let Node::Split { left, right, .. } = node {
                    // children of a split each carry >= min_leaf rows
                    for child in [*left, *right] {
                        if let Node::Leaf { counts } = &tree.nodes[child as usize] {
                            assert!(counts[0] + counts[1] >= hyper.min_leaf as u64);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn oob_error_beats_the_worst_single_tree() {
        for ds in 0..20u64 {
            let mut rng = stream(100 + ds, Domain::Check, 41);
            let n = 120;
            let mut xs = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            for _ in 0..n {
                let x: [f64; 6] = core::array::from_fn(|_| uniform(&mut rng, 0.0, 1.0));
                // noisy rule: two features interact, 15% label flips
                let clean = x[0] + 0.5 * x[3] > 0.75;
                let y = if uniform(&mut rng, 0.0, 1.0) < 0.15 { !clean } else { clean };
                xs.push(x);
                ys.push(y);
            }
            let hyper = ForestHyper { seed: ds, ..ForestHyper::default() };
            let (_, oob) = forest_train(&xs, &ys, &hyper).unwrap();
            let ensemble = oob.ensemble.expect("some rows out of bag");
            let worst = oob
                .per_tree
                .iter()
                .flatten()
                .fold(0.0f64, |a, &b| a.max(b));
            assert!(
                ensemble <= worst + 1e-12,
                "dataset {ds}: ensemble {ensemble} vs worst tree {worst}"
            );
        }
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let (xs, ys) = rule_data(7, 10);
        assert!(forest_train(&xs[..5], &ys, &ForestHyper::default()).is_err());
        assert!(forest_train(&xs, &ys, &ForestHyper { n_trees: 0, ..Default::default() }).is_err());
        let mut bad = xs.clone();
        bad[3][2] = f64::NAN;
        assert!(forest_train(&bad, &ys, &ForestHyper::default()).is_err());
    }
}
