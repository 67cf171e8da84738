use serde::{Deserialize, Serialize};

use super::context::{CausalContext, Kernel};
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, Mat, Vector};

/// The τ-subproblem `min_τ (β/n²)·τᵀHτ + α·τᵀg` over the simplex.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BalanceSystem {
    /// `H_ij = Σ_{v,r} a_i a_j k(C_·i, C_·j)`.
    pub h: Mat,
    /// `g_i = Σ_v ‖X_·iᵀ W⁽ᵛ⁾ − F_i·‖²`.
    pub g: Vector,
}

impl BalanceSystem {
    pub fn objective(&self, tau: &[f64], alpha: f64, beta: f64) -> f64 {
        let t = Vector::from_column_slice(tau);
        let n = tau.len() as f64;
        beta / (n * n) * t.dot(&(&self.h * &t)) + alpha * t.dot(&self.g)
    }
}

/// Per-sample squared regression residuals summed over views.
pub fn regression_residuals(views: &[Mat], ws: &[Mat], f: &Mat) -> Vector {
    let mut g = Vector::zeros(f.nrows());
    for (x, w) in views.iter().zip(ws) {
        let resid = x.transpose() * w - f;
        for i in 0..g.len() {
            g[i] += resid.row(i).norm_squared();
        }
    }
    g
}

/// Sum the discrepancy quadratic forms of every context in a fixed order.
/// `contexts[v]` holds the contexts of view `v`.
pub fn assemble_balance_system(
    contexts: &[Vec<CausalContext>],
    views: &[Mat],
    ws: &[Mat],
    f: &Mat,
) -> Result<BalanceSystem> {
    if contexts.len() != views.len() || ws.len() != views.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} context groups, {} views, {} projections",
            contexts.len(),
            views.len(),
            ws.len()
        )));
    }
    let n = f.nrows();
    let mut h = Mat::zeros(n, n);
    for (x, group) in views.iter().zip(contexts) {
        for ctx in group {
            accumulate(&mut h, ctx, x);
        }
    }
    symmetrize(&mut h);
    Ok(BalanceSystem {
        h,
        g: regression_residuals(views, ws, f),
    })
}

fn accumulate(h: &mut Mat, ctx: &CausalContext, x: &Mat) {
    let a = ctx.treatment.contrast();
    let e = ctx.full_indicator();
    match ctx.kernel {
        Kernel::Linear => {
            let mut y = x.clone();
            for k in 0..y.nrows() {
                y.row_mut(k).scale_mut(e[k]);
            }
            for j in 0..y.ncols() {
                y.column_mut(j).scale_mut(a[j]);
            }
            h.gemm_tr(1.0, &y, &y, 1.0);
        }
        Kernel::Gaussian { .. } => {
            let k = ctx.kernel.gram(&ctx.confounders(x));
            let n = h.nrows();
            for j in 0..n {
                for i in 0..n {
                    h[(i, j)] += a[i] * a[j] * k[(i, j)];
                }
            }
        }
    }
}
