//! Greedy CART classification tree with Gini impurity.

use crate::error::{Error, Result};

use super::{FeatureRow, N_FEATURES};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf_size: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 20,
            min_leaf_size: 5,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_leaf_size == 0 {
            return Err(Error::Config("min_leaf_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Rows with `features[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { counts: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub(crate) nodes: Vec<Node>,
    pub(crate) n_classes: usize,
    pub(crate) params: TreeParams,
}

/// Gini impurity of a class histogram.
pub fn gini(counts: &[u32]) -> f64 {
    let n: u64 = counts.iter().map(|&c| u64::from(c)).sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (f64::from(c) / n).powi(2)).sum::<f64>()
}

/// Index of the largest count; ties go to the lowest class.
pub(crate) fn argmax_low(counts: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

struct Builder<'a> {
    rows: &'a [FeatureRow],
    n_classes: usize,
    params: TreeParams,
    nodes: Vec<Node>,
    scratch: Vec<(f64, u8)>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<u32> {
        let mut c = vec![0u32; self.n_classes];
        for &i in idx {
            c[usize::from(self.rows[i].label)] += 1;
        }
        c
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let counts = self.counts(idx);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let too_small = idx.len() < 2 * self.params.min_leaf_size;
        if pure || too_small || depth >= self.params.max_depth {
            self.nodes.push(Node::Leaf { counts });
            return id;
        }
        let Some(best) = self.best_split(idx, &counts) else {
            self.nodes.push(Node::Leaf { counts });
            return id;
        };
        // Placeholder until the children exist.
        self.nodes.push(Node::Leaf { counts: Vec::new() });
        let mid = partition(idx, |i| self.rows[i].features[best.feature] <= best.threshold);
        let (l, r) = idx.split_at_mut(mid);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    /// Minimizes weighted child Gini, i.e. maximizes `Σl²/nl + Σr²/nr`.
    /// Earlier features and lower thresholds win exact ties.
    fn best_split(&mut self, idx: &[usize], parent: &[u32]) -> Option<BestSplit> {
        let n = idx.len();
        let min_leaf = self.params.min_leaf_size;
        let mut best: Option<BestSplit> = None;
        let mut left = vec![0u64; self.n_classes];
        let mut right = vec![0u64; self.n_classes];
        for f in 0..N_FEATURES {
            self.scratch.clear();
            self.scratch
                .extend(idx.iter().map(|&i| (self.rows[i].features[f], self.rows[i].label)));
            self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            left.iter_mut().for_each(|c| *c = 0);
            right
                .iter_mut()
                .zip(parent)
                .for_each(|(r, &p)| *r = u64::from(p));
            let mut sq_left = 0u64;
            let mut sq_right: u64 = right.iter().map(|c| c * c).sum();
            for i in 0..n - 1 {
                let c = usize::from(self.scratch[i].1);
                sq_left += 2 * left[c] + 1;
                left[c] += 1;
                sq_right -= 2 * right[c] - 1;
                right[c] -= 1;
                let nl = i + 1;
                let nr = n - nl;
                if nr < min_leaf {
                    break;
                }
                if nl < min_leaf {
                    continue;
                }
                let (a, b) = (self.scratch[i].0, self.scratch[i + 1].0);
                if a == b {
                    continue;
                }
                let score = sq_left as f64 / nl as f64 + sq_right as f64 / nr as f64;
                if best.as_ref().is_none_or(|bs| score > bs.score) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }
}

/// In-place partition; returns the number of elements satisfying `pred`,
/// which end up at the front.
fn partition(idx: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut k = 0;
    for j in 0..idx.len() {
        if pred(idx[j]) {
            idx.swap(k, j);
            k += 1;
        }
    }
    k
}

/// Trains on every row once.
pub fn train_tree(rows: &[FeatureRow], n_classes: usize, params: TreeParams) -> Result<DecisionTree> {
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    train_tree_on(rows, &mut idx, n_classes, params)
}

/// Trains on the multiset of rows selected by `idx` (duplicates allowed).
pub fn train_tree_on(rows: &[FeatureRow], idx: &mut [usize], n_classes: usize, params: TreeParams) -> Result<DecisionTree> {
    params.validate()?;
    if idx.is_empty() {
        return Err(Error::Data("cannot train a tree on zero rows".into()));
    }
    if n_classes == 0 || n_classes > usize::from(u8::MAX) + 1 {
        return Err(Error::Config(format!("n_classes must be in 1..=256, got {n_classes}")));
    }
    if let Some(r) = idx.iter().map(|&i| &rows[i]).find(|r| usize::from(r.label) >= n_classes) {
        return Err(Error::Data(format!("label {} outside 0..{n_classes}", r.label)));
    }
    if let Some(r) = idx.iter().map(|&i| &rows[i]).find(|r| r.features.iter().any(|v| !v.is_finite())) {
        return Err(Error::Data(format!("non-finite feature in {:?}", r.features)));
    }
    let mut b = Builder {
        rows,
        n_classes,
        params,
        nodes: Vec::new(),
        scratch: Vec::with_capacity(idx.len()),
    };
    b.build(idx, 0);
    Ok(DecisionTree {
        nodes: b.nodes,
        n_classes,
        params,
    })
}

impl DecisionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn params(&self) -> TreeParams {
        self.params
    }

    /// Index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: &[f64; N_FEATURES]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn leaf_counts(&self, x: &[f64; N_FEATURES]) -> &[u32] {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { counts } => counts,
            Node::Split { .. } => unreachable!("leaf_index stops at leaves"),
        }
    }

    pub fn predict(&self, x: &[f64; N_FEATURES]) -> usize {
        argmax_low(self.leaf_counts(x))
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn accuracy(&self, rows: &[FeatureRow]) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let hits = rows.iter().filter(|r| self.predict(&r.features) == usize::from(r.label)).count();
        hits as f64 / rows.len() as f64
    }
}
