//! Bootstrap-aggregated trees, majority voting, and the model file format.
//!
//! Model file layout (UTF-8, one record per line):
//!
//! ```text
//! mmpath-ensemble
//! version=1
//! n_trees=14
//! n_classes=4
//! feature_names=toa_s,aoa_deg,aod_deg,rss_dbm
//! master_seed=42
//! params=max_depth:20;min_leaf_size:5;bootstrap:true
//! tree=0;nodes=3
//! 0,split,3,-71.5,1,2
//! 1,leaf,,,,,0,12,3,0
//! 2,leaf,,,,,40,1,0,0
//! end
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so a load of a
//! saved model reproduces every threshold bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::substream;

use super::tree::{argmax_low, train_tree_on, DecisionTree, Node, TreeParams};
use super::{FeatureRow, FEATURE_NAMES, N_FEATURES};

pub const DEFAULT_N_TREES: usize = 14;
const MAGIC: &str = "mmpath-ensemble";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaggingParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    /// Resample `|rows|` rows with replacement per tree; when false every
    /// tree sees the full training set.
    pub bootstrap: bool,
}

impl Default for BaggingParams {
    fn default() -> Self {
        Self {
            n_trees: DEFAULT_N_TREES,
            tree: TreeParams::default(),
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    trees: Vec<DecisionTree>,
    n_classes: usize,
    feature_names: Vec<String>,
    master_seed: u64,
    params: BaggingParams,
}

/// Bootstrap sample indices for tree `tree_index`.
pub fn bootstrap_indices(n: usize, master_seed: u64, tree_index: usize) -> Vec<usize> {
    let mut rng = substream(master_seed, &[tree_index as u64]);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

pub fn train_bagged(rows: &[FeatureRow], n_classes: usize, params: BaggingParams, master_seed: u64) -> Result<Ensemble> {
    if params.n_trees < 1 {
        return Err(Error::Config("n_trees must be >= 1".into()));
    }
    if rows.is_empty() {
        return Err(Error::Data("cannot train an ensemble on zero rows".into()));
    }
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut idx = if params.bootstrap {
                bootstrap_indices(rows.len(), master_seed, t)
            } else {
                (0..rows.len()).collect()
            };
            train_tree_on(rows, &mut idx, n_classes, params.tree)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        trees,
        n_classes,
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        master_seed,
        params,
    })
}

impl Ensemble {
    /// Wraps already-trained trees; used by tests and tooling.
    pub fn from_trees(trees: Vec<DecisionTree>, master_seed: u64, params: BaggingParams) -> Result<Self> {
        let first = trees
            .first()
            .ok_or_else(|| Error::Config("an ensemble needs at least one tree".into()))?;
        let n_classes = first.n_classes;
        if trees.iter().any(|t| t.n_classes != n_classes) {
            return Err(Error::Config("trees disagree on n_classes".into()));
        }
        Ok(Self {
            trees,
            n_classes,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            master_seed,
            params,
        })
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn params(&self) -> BaggingParams {
        self.params
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn votes(&self, x: &[f64; N_FEATURES]) -> Vec<u32> {
        let mut votes = vec![0u32; self.n_classes];
        for t in &self.trees {
            votes[t.predict(x)] += 1;
        }
        votes
    }

    /// Majority class and its vote fraction; ties go to the lowest class.
    pub fn predict(&self, x: &[f64; N_FEATURES]) -> (usize, f64) {
        let votes = self.votes(x);
        let class = argmax_low(&votes);
        (class, f64::from(votes[class]) / self.trees.len() as f64)
    }

    pub fn predict_class(&self, x: &[f64; N_FEATURES]) -> usize {
        self.predict(x).0
    }

    pub fn accuracy(&self, rows: &[FeatureRow]) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let hits = rows
            .par_iter()
            .filter(|r| self.predict_class(&r.features) == usize::from(r.label))
            .count();
        hits as f64 / rows.len() as f64
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "version={FORMAT_VERSION}");
        let _ = writeln!(s, "n_trees={}", self.trees.len());
        let _ = writeln!(s, "n_classes={}", self.n_classes);
        let _ = writeln!(s, "feature_names={}", self.feature_names.join(","));
        let _ = writeln!(s, "master_seed={}", self.master_seed);
        let _ = writeln!(
            s,
            "params=max_depth:{};min_leaf_size:{};bootstrap:{}",
            p.tree.max_depth, p.tree.min_leaf_size, p.bootstrap
        );
        for (ti, tree) in self.trees.iter().enumerate() {
            let _ = writeln!(s, "tree={ti};nodes={}", tree.nodes.len());
            for (ni, node) in tree.nodes.iter().enumerate() {
                match node {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        let _ = writeln!(s, "{ni},split,{feature},{threshold},{left},{right}");
                    }
                    Node::Leaf { counts } => {
                        let counts: Vec<String> = counts.iter().map(u32::to_string).collect();
                        let _ = writeln!(s, "{ni},leaf,,,,,{}", counts.join(","));
                    }
                }
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        ModelParser::new(text).parse()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_text(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::Parse {
                path: path.display().to_string(),
                line,
                msg,
            },
            other => other,
        })
    }
}

struct ModelParser<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line_no: usize,
}

impl<'a> ModelParser<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate(),
            line_no: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: "<model>".into(),
            line: self.line_no,
            msg: msg.into(),
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        match self.lines.next() {
            Some((i, l)) => {
                self.line_no = i + 1;
                Ok(l)
            }
            None => Err(self.err("unexpected end of model file")),
        }
    }

    fn key(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| self.err(format!("expected `{key}=…`, found {line:?}")))
    }

    fn num<T: std::str::FromStr>(&self, raw: &str, what: &str) -> Result<T> {
        raw.trim()
            .parse()
            .map_err(|_| self.err(format!("invalid {what}: {raw:?}")))
    }

    fn parse(mut self) -> Result<Ensemble> {
        if self.next_line()? != MAGIC {
            return Err(self.err("not an mmpath model file"));
        }
        let version: u32 = {
            let raw = self.key("version")?;
            self.num(raw, "version")?
        };
        if version != FORMAT_VERSION {
            return Err(self.err(format!("unsupported model version {version}")));
        }
        let raw = self.key("n_trees")?;
        let n_trees: usize = self.num(raw, "n_trees")?;
        let raw = self.key("n_classes")?;
        let n_classes: usize = self.num(raw, "n_classes")?;
        let feature_names: Vec<String> = self.key("feature_names")?.split(',').map(str::to_string).collect();
        if feature_names != FEATURE_NAMES {
            return Err(self.err(format!("unexpected feature names {feature_names:?}")));
        }
        let raw = self.key("master_seed")?;
        let master_seed: u64 = self.num(raw, "master_seed")?;
        let params_raw = self.key("params")?;
        let mut tree_params = TreeParams::default();
        let mut bootstrap = true;
        for kv in params_raw.split(';') {
            let (k, v) = kv.split_once(':').ok_or_else(|| self.err(format!("bad param {kv:?}")))?;
            match k {
                "max_depth" => tree_params.max_depth = self.num(v, "max_depth")?,
                "min_leaf_size" => tree_params.min_leaf_size = self.num(v, "min_leaf_size")?,
                "bootstrap" => bootstrap = self.num(v, "bootstrap")?,
                other => return Err(self.err(format!("unknown param {other:?}"))),
            }
        }
        if n_trees == 0 {
            return Err(self.err("n_trees must be >= 1"));
        }
        let mut trees = Vec::with_capacity(n_trees);
        for ti in 0..n_trees {
            let header = self.next_line()?;
            let n_nodes = header
                .strip_prefix(&format!("tree={ti};nodes="))
                .ok_or_else(|| self.err(format!("expected header of tree {ti}, found {header:?}")))?;
            let n_nodes: usize = self.num(n_nodes, "node count")?;
            let mut nodes = Vec::with_capacity(n_nodes);
            for ni in 0..n_nodes {
                nodes.push(self.node(ni, n_nodes, n_classes)?);
            }
            if nodes.is_empty() {
                return Err(self.err(format!("tree {ti} has no nodes")));
            }
            trees.push(DecisionTree {
                nodes,
                n_classes,
                params: tree_params,
            });
        }
        if self.next_line()? != "end" {
            return Err(self.err("expected `end`"));
        }
        Ok(Ensemble {
            trees,
            n_classes,
            feature_names,
            master_seed,
            params: BaggingParams {
                n_trees,
                tree: tree_params,
                bootstrap,
            },
        })
    }

    fn node(&mut self, expected_id: usize, n_nodes: usize, n_classes: usize) -> Result<Node> {
        let line = self.next_line()?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 6 {
            return Err(self.err(format!("short node record {line:?}")));
        }
        let id: usize = self.num(f[0], "node id")?;
        if id != expected_id {
            return Err(self.err(format!("node id {id}, expected {expected_id}")));
        }
        match f[1] {
            "split" => {
                if f.len() != 6 {
                    return Err(self.err("split record has trailing fields"));
                }
                let feature: usize = self.num(f[2], "feature index")?;
                let threshold: f64 = self.num(f[3], "threshold")?;
                let left: usize = self.num(f[4], "left child")?;
                let right: usize = self.num(f[5], "right child")?;
                if feature >= N_FEATURES || left >= n_nodes || right >= n_nodes || left <= id || right <= id {
                    return Err(self.err(format!("invalid split record {line:?}")));
                }
                Ok(Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                })
            }
            "leaf" => {
                let counts = f[6..]
                    .iter()
                    .map(|c| self.num::<u32>(c, "class count"))
                    .collect::<Result<Vec<_>>>()?;
                if counts.len() != n_classes {
                    return Err(self.err(format!("leaf has {} counts, expected {n_classes}", counts.len())));
                }
                Ok(Node::Leaf { counts })
            }
            other => Err(self.err(format!("unknown node kind {other:?}"))),
        }
    }
}
