use serde::{Deserialize, Serialize};

use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub index: usize,
    /// Row norm `‖W_i·‖₂`.
    pub score: f64,
}

/// Per view, features by descending projection row norm; ties by index.
pub fn rank_features(w: &[Mat]) -> Vec<Vec<FeatureScore>> {
    w.iter()
        .map(|w| {
            let mut scores: Vec<FeatureScore> = (0..w.nrows())
                .map(|i| FeatureScore {
                    index: i,
                    score: w.row(i).norm(),
                })
                .collect();
            scores.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap().then(a.index.cmp(&b.index)));
            scores
        })
        .collect()
}

/// Split `round(ratio·Σd)` selected features across views in proportion to
/// their dimensions, rounding by largest remainder (ties to the earlier view).
pub fn view_quotas(dims: &[usize], ratio: f64) -> Vec<usize> {
    let total: usize = dims.iter().sum();
    if total == 0 {
        return vec![0; dims.len()];
    }
    let h = ((ratio * total as f64).round() as usize).clamp(1, total);
    let exact: Vec<f64> = dims.iter().map(|&d| h as f64 * d as f64 / total as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..dims.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &v in order.iter().take(h - assigned) {
        quotas[v] += 1;
    }
    quotas
}

/// Top features of every view under the proportional quota for `ratio`.
pub fn select_top(ranking: &[Vec<FeatureScore>], ratio: f64) -> Vec<Vec<usize>> {
    let dims: Vec<usize> = ranking.iter().map(Vec::len).collect();
    view_quotas(&dims, ratio)
        .into_iter()
        .zip(ranking)
        .map(|(q, r)| r.iter().take(q).map(|s| s.index).collect())
        .collect()
}

/// The first `k` features of each view.
pub fn top_k(ranking: &[Vec<FeatureScore>], k: usize) -> Vec<Vec<usize>> {
    ranking
        .iter()
        .map(|r| r.iter().take(k).map(|s| s.index).collect())
        .collect()
}
