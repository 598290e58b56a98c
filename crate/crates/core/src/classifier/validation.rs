//! Shuffled splits, k-fold cross-validation, confusion matrices and the
//! RSS-threshold baseline filter.

use std::fmt;

use rand::seq::SliceRandom;

use crate::channel::Measurement;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, substream};

use super::{train_bagged, BaggingParams, Ensemble, FeatureRow, Labeled};

/// Train / validation / test fractions.
pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.6, 0.2, 0.2);

const SPLIT_STREAM: u64 = 0x0053_504c_4954;
const CV_STREAM: u64 = 0x4356;

/// Partition sizes for `n` rows, each within one row of the exact fraction.
pub fn split_sizes(n: usize, fractions: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (a, b, c) = fractions;
    if [a, b, c].iter().any(|f| !(f.is_finite() && *f >= 0.0)) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions {fractions:?} must be >= 0 and sum to 1")));
    }
    let n_train = ((n as f64) * a).round() as usize;
    let n_val = (((n as f64) * b).round() as usize).min(n - n_train.min(n));
    let n_train = n_train.min(n);
    Ok((n_train, n_val, n - n_train - n_val))
}

/// Shuffles with a seed-keyed stream, then cuts into train / validation / test.
pub fn split_dataset<T: Clone>(rows: &[T], fractions: (f64, f64, f64), seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    if rows.is_empty() {
        return Err(Error::Data("cannot split an empty dataset".into()));
    }
    let (n_train, n_val, _) = split_sizes(rows.len(), fractions)?;
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.shuffle(&mut substream(seed, &[SPLIT_STREAM]));
    let pick = |r: &[usize]| r.iter().map(|&i| rows[i].clone()).collect::<Vec<T>>();
    Ok((
        pick(&idx[..n_train]),
        pick(&idx[n_train..n_train + n_val]),
        pick(&idx[n_train + n_val..]),
    ))
}

/// Fold sizes for `n` rows: the first `n % k` folds take one extra row.
pub fn fold_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

/// Accuracy of each of `k` folds, each scored by an ensemble trained on the
/// other folds.
pub fn cross_validate(
    rows: &[FeatureRow],
    n_classes: usize,
    k: usize,
    params: BaggingParams,
    seed: u64,
) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::Config(format!("cross-validation needs k >= 2, got {k}")));
    }
    if rows.len() < k {
        return Err(Error::Data(format!("{} rows cannot form {k} folds", rows.len())));
    }
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.shuffle(&mut substream(seed, &[CV_STREAM]));
    let mut bounds = Vec::with_capacity(k);
    let mut start = 0;
    for size in fold_sizes(rows.len(), k) {
        bounds.push(start..start + size);
        start += size;
    }
    bounds
        .iter()
        .enumerate()
        .map(|(fold, range)| {
            let held: Vec<FeatureRow> = idx[range.clone()].iter().map(|&i| rows[i]).collect();
            let train: Vec<FeatureRow> = idx[..range.start]
                .iter()
                .chain(&idx[range.end..])
                .map(|&i| rows[i])
                .collect();
            let model = train_bagged(&train, n_classes, params, derive_seed(seed, &[CV_STREAM, fold as u64]))?;
            Ok(model.accuracy(&held))
        })
        .collect()
}

/// Rows are the true class, columns the predicted class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.trace() as f64 / total as f64
        }
    }

    /// Off-diagonal mass in row `class` (true class missed).
    pub fn false_negatives(&self, class: usize) -> u64 {
        self.counts[class].iter().sum::<u64>() - self.counts[class][class]
    }

    /// Off-diagonal mass in column `class` (other classes predicted as it).
    pub fn false_positives(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum::<u64>() - self.counts[class][class]
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .counts
            .iter()
            .flatten()
            .map(|c| c.to_string().len())
            .max()
            .unwrap_or(1)
            .max(4);
        write!(f, "{:>8}", "true\\pred")?;
        for j in 0..self.counts.len() {
            write!(f, " {:>width$}", j)?;
        }
        writeln!(f)?;
        for (i, row) in self.counts.iter().enumerate() {
            write!(f, "{:>9}", i)?;
            for c in row {
                write!(f, " {:>width$}", c)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

pub fn confusion<R: Labeled>(ensemble: &Ensemble, rows: &[R]) -> Result<ConfusionMatrix> {
    let n = ensemble.n_classes();
    let mut cm = ConfusionMatrix::new(n);
    for r in rows {
        let truth = r
            .label()
            .ok_or_else(|| Error::Data("confusion matrix needs labeled rows".into()))?;
        let truth = usize::from(truth);
        if truth >= n {
            return Err(Error::Data(format!("label {truth} outside the model's {n} classes")));
        }
        cm.add(truth, ensemble.predict_class(&r.features()));
    }
    Ok(cm)
}

/// Accuracy on `test` of always predicting the most frequent class of `train`.
pub fn majority_baseline(train: &[FeatureRow], test: &[FeatureRow]) -> f64 {
    let mut counts = [0usize; 256];
    for r in train {
        counts[usize::from(r.label)] += 1;
    }
    let majority = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map_or(0, |(i, _)| i);
    if test.is_empty() {
        return 0.0;
    }
    test.iter().filter(|r| usize::from(r.label) == majority).count() as f64 / test.len() as f64
}

/// Keeps paths within `threshold_db` of the strongest one in the epoch.
pub fn baseline_rss_filter(measurements: &[Measurement], threshold_db: f64) -> Result<Vec<&Measurement>> {
    let first = measurements
        .first()
        .ok_or_else(|| Error::Data("RSS filter needs at least one measurement".into()))?;
    if measurements
        .iter()
        .any(|m| m.t.to_bits() != first.t.to_bits() || m.gnb_id != first.gnb_id)
    {
        return Err(Error::Data("RSS filter input spans more than one epoch/gNB".into()));
    }
    if threshold_db.is_nan() || threshold_db < 0.0 {
        return Err(Error::Config(format!("threshold must be >= 0 dB, got {threshold_db}")));
    }
    let max = measurements.iter().map(|m| m.rss).fold(f64::NEG_INFINITY, f64::max);
    Ok(measurements.iter().filter(|m| m.rss >= max - threshold_db).collect())
}
