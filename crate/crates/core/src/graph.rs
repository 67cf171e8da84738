//! Per-view k-nearest-neighbor graphs and their normalized Laplacians.
//!
//! Each view contributes `L⁽ᵛ⁾ = I − D^{-1/2} A D^{-1/2}`, where `A` is a
//! heat-kernel weighted kNN affinity symmetrized by max. The cross-view
//! Laplacian is the plain sum over views.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::MultiViewDataset;
use crate::error::{Error, Result};
use crate::linalg::Mat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GraphIssue {
    /// Every pairwise distance in the view was zero; a uniform affinity was used.
    DegenerateDistances { view: usize },
    /// A vertex had zero degree; its normalized row and column are zero.
    IsolatedVertex { view: usize, vertex: usize },
}

#[derive(Debug, Clone)]
pub struct LaplacianGraph {
    pub per_view: Vec<Mat>,
    pub cross_view: Mat,
    pub issues: Vec<GraphIssue>,
}

/// Pairwise Euclidean distances between the columns of `x`.
pub fn pairwise_distances(x: &Mat) -> Mat {
    let n = x.ncols();
    let gram = x.transpose() * x;
    let mut d = Mat::zeros(n, n);
    for j in 0..n {
        for i in (j + 1)..n {
            let sq = (gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i, j)]).max(0.0);
            let dist = sq.sqrt();
            d[(i, j)] = dist;
            d[(j, i)] = dist;
        }
    }
    d
}

/// Indices of the `k` nearest neighbors of `i` (excluding `i`). Candidates
/// tied with the k-th distance are all included, so equidistant points are
/// treated alike.
fn neighbors(dist: &Mat, i: usize, k: usize) -> Vec<usize> {
    let n = dist.nrows();
    let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    others.sort_by(|&a, &b| {
        dist[(i, a)]
            .partial_cmp(&dist[(i, b)])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let kth = dist[(i, others[k - 1])];
    let cutoff = kth + 1e-12 * kth.abs().max(1e-300);
    others.into_iter().filter(|&j| dist[(i, j)] <= cutoff).collect()
}

/// Symmetric heat-kernel kNN affinity of the samples (columns) of `x`.
///
/// `A_ij > 0` iff `i` is among `j`'s k nearest neighbors or vice versa. The
/// bandwidth is the median distance over connected pairs. Returns
/// [`Error::DegenerateDistances`] when all samples coincide.
pub fn knn_affinity(x: &Mat, k: usize) -> Result<Mat> {
    let n = x.ncols();
    if k == 0 || k >= n {
        return Err(Error::InvalidParams(format!("k_nn = {k} must lie in 1..{n}")));
    }
    let dist = pairwise_distances(x);
    if dist.iter().all(|&d| d == 0.0) {
        return Err(Error::DegenerateDistances);
    }
    let mut connected = vec![false; n * n];
    for i in 0..n {
        for j in neighbors(&dist, i, k) {
            connected[i * n + j] = true;
            connected[j * n + i] = true;
        }
    }
    let mut edge_dists: Vec<f64> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if connected[i * n + j] {
                edge_dists.push(dist[(i, j)]);
            }
        }
    }
    edge_dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut sigma = median_sorted(&edge_dists);
    if sigma <= 0.0 {
        // connected pairs all coincide; fall back to the median positive distance
        let mut positive: Vec<f64> = dist.iter().copied().filter(|&d| d > 0.0).collect();
        positive.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sigma = median_sorted(&positive);
    }
    let denom = 2.0 * sigma * sigma;
    Ok(Mat::from_fn(n, n, |i, j| {
        if i != j && connected[i * n + j] {
            (-dist[(i, j)] * dist[(i, j)] / denom).exp()
        } else {
            0.0
        }
    }))
}

fn median_sorted(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        len if len % 2 == 1 => v[len / 2],
        len => 0.5 * (v[len / 2 - 1] + v[len / 2]),
    }
}

pub fn uniform_affinity(n: usize) -> Mat {
    Mat::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 })
}

/// `I − D^{-1/2} A D^{-1/2}`; zero-degree vertices get a unit diagonal and
/// zero off-diagonals. Returns the Laplacian and the isolated vertices.
pub fn normalized_laplacian(a: &Mat) -> (Mat, Vec<usize>) {
    let n = a.nrows();
    let degrees: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    let inv_sqrt: Vec<f64> = degrees
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let isolated = degrees
        .iter()
        .enumerate()
        .filter(|(_, &d)| d <= 0.0)
        .map(|(i, _)| i)
        .collect();
    let l = Mat::from_fn(n, n, |i, j| {
        let off = -inv_sqrt[i] * a[(i, j)] * inv_sqrt[j];
        if i == j {
            1.0 + off
        } else {
            off
        }
    });
    (l, isolated)
}

pub fn build_laplacian(ds: &MultiViewDataset, k: usize) -> Result<LaplacianGraph> {
    let n = ds.n_samples();
    let built: Vec<Result<(Mat, Vec<GraphIssue>)>> = ds
        .views()
        .par_iter()
        .enumerate()
        .map(|(v, x)| {
            let mut issues = Vec::new();
            let a = match knn_affinity(x, k) {
                Ok(a) => a,
                Err(Error::DegenerateDistances) => {
                    issues.push(GraphIssue::DegenerateDistances { view: v });
                    uniform_affinity(n)
                }
                Err(e) => return Err(e),
            };
            let (l, isolated) = normalized_laplacian(&a);
            issues.extend(
                isolated
                    .into_iter()
                    .map(|vertex| GraphIssue::IsolatedVertex { view: v, vertex }),
            );
            Ok((l, issues))
        })
        .collect();
    let mut per_view = Vec::with_capacity(ds.n_views());
    let mut issues = Vec::new();
    for item in built {
        let (l, iss) = item?;
        per_view.push(l);
        issues.extend(iss);
    }
    for issue in &issues {
        log::warn!("graph construction: {issue:?}");
    }
    let mut cross_view = Mat::zeros(n, n);
    for l in &per_view {
        cross_view += l;
    }
    Ok(LaplacianGraph {
        per_view,
        cross_view,
        issues,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equidistant_points_are_fully_connected() {
        let s = 3f64.sqrt() / 2.0;
        let x = Mat::from_row_slice(2, 3, &[0.0, 1.0, 0.5, 0.0, 0.0, s]);
        let a = knn_affinity(&x, 1).unwrap();
        let w = a[(0, 1)];
        assert!(w > 0.0);
        for i in 0..3 {
            assert_eq!(a[(i, i)], 0.0);
            for j in 0..3 {
                if i != j {
                    assert!((a[(i, j)] - w).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn separated_pairs_give_block_affinity() {
        let x = Mat::from_row_slice(1, 4, &[0.0, 0.1, 10.0, 10.1]);
        let a = knn_affinity(&x, 1).unwrap();
        assert!(a[(0, 1)] > 0.0 && a[(2, 3)] > 0.0);
        for i in 0..2 {
            for j in 2..4 {
                assert_eq!(a[(i, j)], 0.0);
                assert_eq!(a[(j, i)], 0.0);
            }
        }
    }

    #[test]
    fn two_vertex_laplacian() {
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let (l, iso) = normalized_laplacian(&a);
        assert!(iso.is_empty());
        assert_eq!(l, Mat::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn isolated_vertex_has_unit_diagonal() {
        let a = Mat::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let (l, iso) = normalized_laplacian(&a);
        assert_eq!(iso, vec![2]);
        assert_eq!(l[(2, 2)], 1.0);
        assert_eq!(l[(2, 0)], 0.0);
    }

    #[test]
    fn coincident_samples_fall_back_to_uniform() {
        let x = Mat::from_element(2, 4, 1.5);
        assert!(matches!(knn_affinity(&x, 2), Err(Error::DegenerateDistances)));
        let ds = MultiViewDataset::new(vec![x], None).unwrap();
        let g = build_laplacian(&ds, 2).unwrap();
        assert_eq!(g.issues, vec![GraphIssue::DegenerateDistances { view: 0 }]);
        let (expected, _) = normalized_laplacian(&uniform_affinity(4));
        assert!((&g.cross_view - expected).norm() < 1e-12);
    }
}
