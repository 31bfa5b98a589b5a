//! Classification metric suite: confusion counts, accuracy, macro-F1,
//! macro one-vs-rest ROC-AUC, and MSE against one-hot targets.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    Ideal,
    Noisy,
}

impl std::fmt::Display for Environment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Environment::Ideal => write!(f, "ideal"),
            Environment::Noisy => write!(f, "noisy"),
        }
    }
}

/// Metric bundle for one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub roc_auc: f64,
    pub environment: Environment,
    /// `confusion[truth][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
    /// Classes whose F1 term was 0/0 (no true and no predicted samples).
    pub degenerate_f1_classes: Vec<usize>,
}

/// `counts[truth][predicted]` over `k` classes.
pub fn confusion_matrix(truth: &[usize], predicted: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    if truth.len() != predicted.len() {
        return Err(Error::InvalidArgument(format!(
            "{} labels vs {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut m = vec![vec![0usize; k]; k];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= k || p >= k {
            return Err(Error::InvalidArgument(format!(
                "class index out of range: truth {t}, predicted {p}, k {k}"
            )));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

pub fn accuracy(confusion: &[Vec<usize>]) -> f64 {
    let correct: usize = confusion.iter().enumerate().map(|(i, row)| row[i]).sum();
    let total: usize = confusion.iter().flatten().sum();
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

/// Macro-averaged F1. A class with neither true nor predicted samples
/// contributes 0 and is reported in the second return value.
pub fn macro_f1(confusion: &[Vec<usize>]) -> (f64, Vec<usize>) {
    let k = confusion.len();
    let mut sum = 0.0;
    let mut degenerate = Vec::new();
    for c in 0..k {
        let tp = confusion[c][c];
        let fn_: usize = confusion[c].iter().sum::<usize>() - tp;
        let fp: usize = (0..k).map(|t| confusion[t][c]).sum::<usize>() - tp;
        if tp + fn_ + fp == 0 {
            degenerate.push(c);
            continue; // 0/0 term, defined as 0
        }
        sum += 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
    }
    (sum / k as f64, degenerate)
}

/// AUC of one class's scores via the tie-averaged rank statistic.
fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // 1-based ranks, ties averaged
    let mut rank = vec![0.0f64; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            rank[idx] = avg;
        }
        i = j + 1;
    }

    let rank_sum: f64 = positive
        .iter()
        .zip(&rank)
        .filter(|(&p, _)| p)
        .map(|(_, &r)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Macro one-vs-rest ROC-AUC over per-class probability scores
/// (`scores[sample][class]`). Classes missing a positive or negative
/// example are skipped from the average.
pub fn roc_auc_macro(scores: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    let k = scores.ncols();
    if scores.nrows() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} score rows vs {} labels",
            scores.nrows(),
            labels.len()
        )));
    }
    let distinct: std::collections::BTreeSet<usize> = labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::InvalidArgument(
            "roc-auc needs at least two distinct labels".into(),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {k} classes"
        )));
    }

    let mut sum = 0.0;
    let mut counted = 0usize;
    for c in 0..k {
        let col: Vec<f64> = scores.column(c).to_vec();
        let positive: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        if let Some(auc) = binary_auc(&col, &positive) {
            sum += auc;
            counted += 1;
        } else {
            log::warn!("class {c} has no positives or no negatives; skipped in roc-auc");
        }
    }
    Ok(sum / counted as f64)
}

/// Mean squared error between probability rows and one-hot labels.
pub fn mse_one_hot(scores: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    let (rows, k) = scores.dim();
    if rows != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{rows} score rows vs {} labels",
            labels.len()
        )));
    }
    let mut sum = 0.0;
    for (row, &label) in scores.rows().into_iter().zip(labels) {
        for (c, &p) in row.iter().enumerate() {
            let y = if c == label { 1.0 } else { 0.0 };
            sum += (p - y) * (p - y);
        }
    }
    Ok(sum / (rows * k) as f64)
}
