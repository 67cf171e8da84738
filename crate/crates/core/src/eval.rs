//! Clustering-based scoring of feature subsets.

use pathfinding::prelude::{kuhn_munkres, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::MultiViewDataset;
use crate::error::{Error, Result};
use crate::linalg::Mat;

pub const KMEANS_MAX_ITER: usize = 300;
pub const DEFAULT_RESTARTS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// Cluster centers as columns.
    pub centers: Mat,
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(points: &Mat, i: usize, centers: &Mat, c: usize) -> f64 {
    points
        .column(i)
        .iter()
        .zip(centers.column(c).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Lloyd's algorithm with k-means++ seeding on the columns of `points`.
///
/// Stops when assignments no longer change or after 300 iterations. A cluster
/// that empties is re-seeded with the point farthest from its current center.
pub fn kmeans(points: &Mat, k: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.ncols();
    if k == 0 || k > n {
        return Err(Error::InvalidParams(format!("k = {k} must lie in 1..={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = points.nrows();
    let mut centers = Mat::zeros(dim, k);
    let first = rng.random_range(0..n);
    centers.set_column(0, &points.column(first));
    let mut closest: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in closest.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.set_column(c, &points.column(pick));
        for (i, d) in closest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points, i, &centers, c));
        }
    }

    let mut labels = vec![usize::MAX; n];
    let mut iterations = 0;
    for it in 0..KMEANS_MAX_ITER {
        iterations = it + 1;
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for c in 0..k {
                let d = sq_dist(points, i, &centers, c);
                if d < best.0 {
                    best = (d, c);
                }
            }
            if *label != best.1 {
                *label = best.1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        update_centers(points, &mut labels, &mut centers, k);
    }
    let inertia = (0..n).map(|i| sq_dist(points, i, &centers, labels[i])).sum();
    Ok(KMeansResult {
        labels,
        centers,
        inertia,
        iterations,
    })
}

fn update_centers(points: &Mat, labels: &mut [usize], centers: &mut Mat, k: usize) {
    let n = points.ncols();
    loop {
        let mut sums = Mat::zeros(points.nrows(), k);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let mut col = sums.column_mut(labels[i]);
            col += points.column(i);
            counts[labels[i]] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            for c in 0..k {
                centers.set_column(c, &(sums.column(c) / counts[c] as f64));
            }
            return;
        };
        let mut far = (f64::NEG_INFINITY, 0);
        for i in 0..n {
            if counts[labels[i]] > 1 {
                let d = sq_dist(points, i, centers, labels[i]);
                if d > far.0 {
                    far = (d, i);
                }
            }
        }
        labels[far.1] = empty;
        centers.set_column(empty, &points.column(far.1));
    }
}

fn contingency(pred: &[usize], truth: &[usize]) -> (Vec<Vec<usize>>, usize, usize) {
    let kp = pred.iter().max().map_or(0, |m| m + 1);
    let kt = truth.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; kt]; kp];
    for (&p, &t) in pred.iter().zip(truth) {
        table[p][t] += 1;
    }
    (table, kp, kt)
}

/// Fraction of samples matched under the best one-to-one relabeling of the
/// predicted clusters.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let (table, kp, kt) = contingency(pred, truth);
    let size = kp.max(kt);
    let weights = Matrix::from_fn(size, size, |(i, j)| {
        if i < kp && j < kt {
            table[i][j] as i64
        } else {
            0
        }
    });
    let (matched, _) = kuhn_munkres(&weights);
    Ok(matched as f64 / pred.len() as f64)
}

/// `I(pred; truth) / sqrt(H(pred)·H(truth))` with natural logarithms; zero
/// when either side has a single cluster.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    let n = pred.len() as f64;
    let (table, kp, kt) = contingency(pred, truth);
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum::<usize>() as f64).collect();
    let cols: Vec<f64> = (0..kt)
        .map(|j| table.iter().map(|r| r[j]).sum::<usize>() as f64)
        .collect();
    let entropy = |counts: &[f64]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0.0)
            .map(|&c| -(c / n) * (c / n).ln())
            .sum()
    };
    let hp = entropy(&rows);
    let ht = entropy(&cols);
    if hp <= 0.0 || ht <= 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for i in 0..kp {
        for j in 0..kt {
            let nij = table[i][j] as f64;
            if nij > 0.0 {
                mi += nij / n * (n * nij / (rows[i] * cols[j])).ln();
            }
        }
    }
    Ok((mi / (hp * ht).sqrt()).clamp(0.0, 1.0))
}

/// Causal-recovery precision and recall of a selection against known roles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub precision: f64,
    pub recall: f64,
}

pub fn recovery(selected: &[Vec<usize>], causal: &[Vec<usize>]) -> Recovery {
    let mut hits = 0usize;
    let mut picked = 0usize;
    let mut total = 0usize;
    for (sel, truth) in selected.iter().zip(causal) {
        picked += sel.len();
        total += truth.len();
        hits += sel.iter().filter(|i| truth.contains(i)).count();
    }
    Recovery {
        precision: if picked == 0 { 0.0 } else { hits as f64 / picked as f64 },
        recall: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub acc_mean: Option<f64>,
    pub acc_std: Option<f64>,
    pub nmi_mean: Option<f64>,
    pub nmi_std: Option<f64>,
    pub restarts: usize,
    pub selected: Vec<Vec<usize>>,
    pub recovery: Option<Recovery>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Cluster the selected features `restarts` times and score the partitions
/// against the dataset labels. `k` defaults to the label count. `causal`,
/// when given, lists the true causal features of each view.
///
/// Returns [`Error::NoLabels`] when the dataset has no labels and no roles
/// are supplied; with roles only the recovery block is filled.
pub fn evaluate_selection(
    ds: &MultiViewDataset,
    indices: &[Vec<usize>],
    k: Option<usize>,
    restarts: usize,
    seed: u64,
    causal: Option<&[Vec<usize>]>,
) -> Result<EvaluationReport> {
    if indices.len() != ds.n_views() {
        return Err(Error::ShapeMismatch(format!(
            "{} index lists for {} views",
            indices.len(),
            ds.n_views()
        )));
    }
    for (v, idx) in indices.iter().enumerate() {
        if let Some(&bad) = idx.iter().find(|&&i| i >= ds.dims()[v]) {
            return Err(Error::InvalidParams(format!("feature {bad} out of range in view {v}")));
        }
    }
    let recovery = causal.map(|c| recovery(indices, c));
    let mut report = EvaluationReport {
        acc_mean: None,
        acc_std: None,
        nmi_mean: None,
        nmi_std: None,
        restarts,
        selected: indices.to_vec(),
        recovery,
    };
    let Some(labels) = ds.labels() else {
        return if recovery.is_some() { Ok(report) } else { Err(Error::NoLabels) };
    };
    let k = k.or(ds.n_classes()).unwrap_or(2);
    let points = ds.select_features(indices);
    if points.nrows() == 0 {
        return Err(Error::InvalidParams("empty feature selection".into()));
    }
    let scores: Vec<Result<(f64, f64)>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let km = kmeans(&points, k, seed.wrapping_add(r as u64))?;
            Ok((accuracy(&km.labels, labels)?, nmi(&km.labels, labels)?))
        })
        .collect();
    let mut accs = Vec::with_capacity(restarts);
    let mut nmis = Vec::with_capacity(restarts);
    for s in scores {
        let (a, b) = s?;
        accs.push(a);
        nmis.push(b);
    }
    if !accs.is_empty() {
        let (am, asd) = mean_std(&accs);
        let (nm, nsd) = mean_std(&nmis);
        report.acc_mean = Some(am);
        report.acc_std = Some(asd);
        report.nmi_mean = Some(nm);
        report.nmi_std = Some(nsd);
    }
    Ok(report)
}
