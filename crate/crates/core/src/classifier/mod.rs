//! Order-of-reflection identification: CART trees, bagging, and the
//! evaluation helpers around them.

mod ensemble;
mod tree;
mod validation;

pub use ensemble::{bootstrap_indices, train_bagged, BaggingParams, Ensemble, DEFAULT_N_TREES};
pub use tree::{gini, train_tree, train_tree_on, DecisionTree, Node, TreeParams};
pub use validation::{
    baseline_rss_filter, confusion, cross_validate, fold_sizes, majority_baseline, split_dataset, split_sizes,
    ConfusionMatrix, DEFAULT_SPLIT,
};

use crate::channel::Measurement;
use crate::error::{Error, Result};

pub const N_FEATURES: usize = 4;
pub const FEATURE_NAMES: [&str; N_FEATURES] = ["toa_s", "aoa_deg", "aod_deg", "rss_dbm"];

/// Number of classes for a given maximum reflection order (label 0 is LoS).
pub fn n_classes_for(max_order: usize) -> usize {
    max_order + 1
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureRow {
    pub features: [f64; N_FEATURES],
    pub label: u8,
}

impl FeatureRow {
    pub fn from_measurement(m: &Measurement) -> Result<Self> {
        let label = m
            .label
            .ok_or_else(|| Error::Data(format!("unlabeled measurement at t={} gnb={}", m.t, m.gnb_id)))?;
        Ok(Self {
            features: m.features(),
            label,
        })
    }
}

pub fn rows_from_measurements(ms: &[Measurement]) -> Result<Vec<FeatureRow>> {
    ms.iter().map(FeatureRow::from_measurement).collect()
}

/// Anything that carries a feature vector and possibly a label.
pub trait Labeled {
    fn features(&self) -> [f64; N_FEATURES];
    fn label(&self) -> Option<u8>;
}

impl Labeled for FeatureRow {
    fn features(&self) -> [f64; N_FEATURES] {
        self.features
    }
    fn label(&self) -> Option<u8> {
        Some(self.label)
    }
}

impl Labeled for Measurement {
    fn features(&self) -> [f64; N_FEATURES] {
        Measurement::features(self)
    }
    fn label(&self) -> Option<u8> {
        self.label
    }
}
