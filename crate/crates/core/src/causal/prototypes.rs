use crate::linalg::{row_norms_sq, Mat};

/// Average-linkage agglomerative clustering of the rows of `w`, cut at `m`
/// clusters. Returns the row with the largest norm from each cluster (ties to
/// the smaller index), sorted ascending.
///
/// Merges always join the closest pair of active clusters; equal distances are
/// broken by the lexicographically smallest `(i, j)` cluster pair, so the
/// output is fully deterministic.
pub fn select_prototypes(w: &Mat, m: usize) -> Vec<usize> {
    let d = w.nrows();
    let m = m.clamp(1, d.max(1));
    let mut members: Vec<Vec<usize>> = (0..d).map(|i| vec![i]).collect();
    let mut active = vec![true; d];
    let mut dist = vec![0.0; d * d];
    for i in 0..d {
        for j in (i + 1)..d {
            let dij = (w.row(i) - w.row(j)).norm();
            dist[i * d + j] = dij;
            dist[j * d + i] = dij;
        }
    }
    let mut clusters = d;
    while clusters > m {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..d {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..d {
                if active[j] && dist[i * d + j] < best.0 {
                    best = (dist[i * d + j], i, j);
                }
            }
        }
        let (_, i, j) = best;
        let si = members[i].len() as f64;
        let sj = members[j].len() as f64;
        for k in 0..d {
            if active[k] && k != i && k != j {
                let merged = (si * dist[i * d + k] + sj * dist[j * d + k]) / (si + sj);
                dist[i * d + k] = merged;
                dist[k * d + i] = merged;
            }
        }
        let moved = std::mem::take(&mut members[j]);
        members[i].extend(moved);
        active[j] = false;
        clusters -= 1;
    }
    let norms = row_norms_sq(w);
    let mut protos: Vec<usize> = (0..d)
        .filter(|&i| active[i])
        .map(|i| {
            *members[i]
                .iter()
                .min_by(|&&a, &&b| norms[b].partial_cmp(&norms[a]).unwrap().then(a.cmp(&b)))
                .unwrap()
        })
        .collect();
    protos.sort_unstable();
    protos
}
