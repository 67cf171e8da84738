//! Dense linear-algebra helpers shared by the solver blocks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Largest absolute difference between `m` and its transpose.
pub fn asymmetry(m: &Mat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &mut Mat) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Power-iteration estimate of the largest eigenvalue of a symmetric PSD matrix.
///
/// The start vector is fixed (all ones plus a deterministic ramp), so the
/// estimate is reproducible.
pub fn power_lambda_max(m: &Mat, iters: usize) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = Vector::from_fn(n, |i, _| 1.0 + (i as f64 + 1.0) / (n as f64 * 7.0));
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 || !norm.is_finite() {
            return 0.0;
        }
        lambda = v.dot(&w);
        v = w / norm;
    }
    // Rayleigh quotient of the last iterate.
    let w = m * &v;
    lambda.max(v.dot(&w))
}

/// Bottom-`k` eigenpairs of a symmetric matrix, eigenvalues ascending.
pub fn bottom_eigenvectors(m: &Mat, k: usize) -> Result<(Vec<f64>, Mat)> {
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m.clone(), 1e-12, 10_000).ok_or(Error::EigenFailure)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut vectors = Mat::zeros(n, k);
    let mut values = Vec::with_capacity(k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        values.push(eig.eigenvalues[idx]);
        let mut v = eig.eigenvectors.column(idx).into_owned();
        fix_sign(&mut v);
        vectors.set_column(col, &v);
    }
    Ok((values, vectors))
}

/// Flip `v` so its largest-magnitude entry is positive (first such entry on ties).
pub fn fix_sign(v: &mut Vector) {
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if best_abs > 0.0 && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Orthogonal polar factor `U Vᵀ` of a tall matrix, with the sign convention
/// applied to each left singular vector before recombination.
pub fn polar_factor(m: &Mat) -> Mat {
    let (rows, cols) = m.shape();
    debug_assert!(cols <= rows);
    let svd = m.clone().svd(true, true);
    let mut u = svd.u.expect("requested U");
    let mut v_t = svd.v_t.expect("requested Vᵀ");
    for k in 0..u.ncols() {
        let col = u.column(k);
        let lead = col.iter().fold(0.0f64, |acc, &x| if x.abs() > acc.abs() { x } else { acc });
        if lead < 0.0 {
            u.column_mut(k).neg_mut();
            v_t.row_mut(k).neg_mut();
        }
    }
    u * v_t
}

/// Orthonormalize the columns of a tall matrix (thin Q of a QR factorization,
/// with column signs made to agree with the diagonal of R being positive).
pub fn orthonormalize(m: &Mat) -> Mat {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..q.ncols().min(r.nrows()) {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}

/// `‖MᵀM − I‖_F`.
pub fn orthonormality_error(m: &Mat) -> f64 {
    let g = m.transpose() * m;
    let c = g.nrows();
    (g - Mat::identity(c, c)).norm()
}

/// Squared Euclidean norm of each row.
pub fn row_norms_sq(m: &Mat) -> Vec<f64> {
    (0..m.nrows()).map(|i| m.row(i).norm_squared()).collect()
}

/// Elementwise positive and negative parts: `M = M₊ − M₋`, both nonnegative.
pub fn split_signs(m: &Mat) -> (Mat, Mat) {
    (m.map(|x| x.max(0.0)), m.map(|x| (-x).max(0.0)))
}

/// Scale column `i` of `m` by `w[i]`.
pub fn scale_columns(m: &Mat, w: &[f64]) -> Mat {
    let mut out = m.clone();
    for (j, &s) in w.iter().enumerate() {
        out.column_mut(j).scale_mut(s);
    }
    out
}

/// Scale row `i` of `m` by `w[i]`.
pub fn scale_rows(m: &Mat, w: &[f64]) -> Mat {
    let mut out = m.clone();
    for (i, &s) in w.iter().enumerate() {
        out.row_mut(i).scale_mut(s);
    }
    out
}
