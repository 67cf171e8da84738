//! Solver primitives: generalized power iteration for orthogonality-constrained
//! quadratic trace problems, Euclidean projection onto the probability simplex,
//! the proximal step for an ℓ₁ penalty with a unit box, and ℓ₂,₁ reweighting.

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, orthonormality_error, polar_factor, power_lambda_max, Mat, Vector};

/// `min_{WᵀW = I} Tr(WᵀAW − 2WᵀB)` with `A` symmetric `d × d` and `B` `d × c`.
#[derive(Debug, Clone)]
pub struct TraceProblem {
    pub a: Mat,
    pub b: Mat,
}

impl TraceProblem {
    pub fn new(a: Mat, b: Mat) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if b.ncols() > b.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "c = {} exceeds d = {}",
                b.ncols(),
                b.nrows()
            )));
        }
        let scale = a.amax().max(1.0);
        let asym = asymmetry(&a);
        if asym > 1e-10 * scale {
            return Err(Error::NonSymmetric(asym));
        }
        Ok(Self { a, b })
    }

    /// `Tr(WᵀAW − 2WᵀB)`.
    pub fn value(&self, w: &Mat) -> f64 {
        let aw = &self.a * w;
        w.dot(&aw) - 2.0 * w.dot(&self.b)
    }
}

#[derive(Debug, Clone)]
pub struct GpiOutcome {
    pub w: Mat,
    /// `Tr(Wᵀ(γI − A)W + 2WᵀB)` at the start and after every inner iteration.
    pub surrogate: Vec<f64>,
    pub gamma: f64,
}

pub const GPI_POWER_ITERS: usize = 50;

/// Generalized power iteration.
///
/// Each step replaces `W` with the polar factor of `M = (γI − A)W + B`, which
/// cannot decrease the surrogate `Tr(Wᵀ(γI − A)W + 2WᵀB)` when `γI − A` is
/// PSD; `γ` is a 1%-inflated power-iteration estimate of `λ_max(A)`.
pub fn gpi_solve(p: &TraceProblem, w0: &Mat, iters: usize, tol: f64) -> Result<GpiOutcome> {
    if w0.shape() != p.b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "W0 is {:?}, B is {:?}",
            w0.shape(),
            p.b.shape()
        )));
    }
    let orth = orthonormality_error(w0);
    if orth > 1e-8 {
        return Err(Error::InvalidParams(format!(
            "W0 is not orthonormal (‖W0ᵀW0 − I‖ = {orth:e})"
        )));
    }
    let gamma = symmetric_lambda_max(&p.a).max(0.0) * 1.01 + 1e-8;
    let surrogate = |w: &Mat| {
        let shifted = w * gamma - &p.a * w;
        w.dot(&shifted) + 2.0 * w.dot(&p.b)
    };
    let mut w = w0.clone();
    let mut trace = vec![surrogate(&w)];
    for _ in 0..iters {
        let m = &w * gamma - &p.a * &w + &p.b;
        let next = polar_factor(&m);
        let value = surrogate(&next);
        let prev = *trace.last().unwrap();
        w = next;
        trace.push(value);
        if (value - prev).abs() <= tol * prev.abs().max(1e-300) {
            break;
        }
    }
    Ok(GpiOutcome {
        w,
        surrogate: trace,
        gamma,
    })
}

/// Largest eigenvalue of a symmetric, possibly indefinite matrix. Power
/// iteration alone finds the eigenvalue of largest magnitude, so it also runs
/// on `A + ‖A‖_F·I`, which is PSD and keeps the ordering.
fn symmetric_lambda_max(a: &Mat) -> f64 {
    let direct = power_lambda_max(a, GPI_POWER_ITERS);
    let shift = a.norm();
    let n = a.nrows();
    let shifted = power_lambda_max(&(a + Mat::identity(n, n) * shift), GPI_POWER_ITERS) - shift;
    direct.max(shifted)
}

/// Euclidean projection onto `{τ ≥ 0, Σ τ = 1}` by the sorted-threshold rule.
pub fn simplex_project(y: &[f64]) -> Vec<f64> {
    assert!(!y.is_empty(), "cannot project an empty vector");
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - 1.0) / (i as f64 + 1.0);
        if ui - t > 0.0 {
            theta = t;
        }
    }
    let mut out: Vec<f64> = y.iter().map(|&v| (v - theta).max(0.0)).collect();
    // exact unit sum for downstream invariants
    let total: f64 = out.iter().sum();
    if total > 0.0 && (total - 1.0).abs() > 0.0 {
        for v in &mut out {
            *v /= total;
        }
    }
    out
}

/// Proximal operator of `weight·‖x‖₁ + 𝟙[0,1]` with step `step`:
/// soft-threshold at `step·weight`, then clip to the unit box.
pub fn prox_l1_box(x: &[f64], step: f64, weight: f64) -> Vec<f64> {
    let t = step * weight;
    x.iter()
        .map(|&v| {
            let soft = v.signum() * (v.abs() - t).max(0.0);
            soft.clamp(0.0, 1.0)
        })
        .collect()
}

/// Diagonal of the ℓ₂,₁ reweighting matrix: `1 / (2·sqrt(‖W_i·‖² + ε))`.
pub fn l21_reweight(w: &Mat, epsilon: f64) -> Vector {
    Vector::from_fn(w.nrows(), |i, _| {
        0.5 / (w.row(i).norm_squared() + epsilon).sqrt()
    })
}

/// Smoothed ℓ₂,₁ norm `Σ_i sqrt(‖W_i·‖² + ε)`.
pub fn smoothed_l21(w: &Mat, epsilon: f64) -> f64 {
    (0..w.nrows())
        .map(|i| (w.row(i).norm_squared() + epsilon).sqrt())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_fixed_point_and_corner() {
        let p = simplex_project(&[0.2, 0.3, 0.5]);
        for (a, b) in p.iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(simplex_project(&[2.0, 1.0]), vec![1.0, 0.0]);
        assert_eq!(simplex_project(&[-3.0]), vec![1.0]);
    }

    #[test]
    fn prox_examples() {
        assert!((prox_l1_box(&[0.7], 1.0, 0.2)[0] - 0.5).abs() < 1e-15);
        assert_eq!(prox_l1_box(&[-0.3], 1.0, 0.0), vec![0.0]);
        assert_eq!(prox_l1_box(&[-0.3], 2.0, 5.0), vec![0.0]);
        assert_eq!(prox_l1_box(&[1.9], 1.0, 0.4), vec![1.0]);
    }

    #[test]
    fn reweight_examples() {
        let w = Mat::from_row_slice(2, 2, &[3.0, 4.0, 0.0, 0.0]);
        let d = l21_reweight(&w, 1e-8);
        assert!((d[0] - 0.1).abs() < 1e-9);
        assert!((d[1] - 5000.0).abs() < 1e-6);
    }

    #[test]
    fn gpi_with_identity_reduces_to_procrustes() {
        let p = TraceProblem::new(Mat::identity(2, 2), Mat::identity(2, 2)).unwrap();
        let w0 = Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let out = gpi_solve(&p, &w0, 30, 1e-10).unwrap();
        assert!((out.w - Mat::identity(2, 2)).norm() < 1e-8);
    }

    #[test]
    fn gpi_finds_smallest_eigenvector() {
        let a = Mat::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let p = TraceProblem::new(a, Mat::zeros(2, 1)).unwrap();
        let w0 = Mat::from_row_slice(2, 1, &[0.8, 0.6]);
        let out = gpi_solve(&p, &w0, 2000, 0.0).unwrap();
        assert!(out.w[(0, 0)].abs() < 1e-6);
        assert!((out.w[(1, 0)].abs() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_asymmetric_problem() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            TraceProblem::new(a, Mat::zeros(2, 1)),
            Err(Error::NonSymmetric(_))
        ));
    }
}
