//! Proximal-gradient updates of the relaxed confounding indicators.
//!
//! With `C = diag(e)·Z`, `s = e ∘ e`, `G = XXᵀ`, `M = G ∘ G` and
//! `q_k = ‖(XF)_k·‖²`, the smooth part of the indicator objective expands to
//!
//! ```text
//! (β/n²)·MMD(s) + sᵀMs − 2sᵀq + ‖FᵀF‖² − Σ_k e_k G_kr
//! ```
//!
//! so each evaluation costs one `d × d` matrix-vector product.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::context::{CausalContext, Kernel, ViewGram};
use crate::linalg::{Mat, Vector};
use crate::optim::prox_l1_box;
use crate::params::HyperParams;

pub const MAX_PROX_STEPS: usize = 100;
pub const PROX_TOL: f64 = 1e-6;
pub const ARMIJO: f64 = 1e-4;
pub const MIN_STEP: f64 = 1e-12;

/// Value of the smooth part and its gradient over the `d_v − 1` indicators.
#[derive(Debug, Clone)]
pub struct IndicatorEval {
    pub value: f64,
    pub gradient: Vec<f64>,
}

enum Discrepancy {
    Linear { b: Vector },
    Gaussian { w: Vector, bandwidth: f64 },
}

/// Precomputed pieces of one context's smooth objective, for fixed `τ` and `F`.
pub(crate) struct SmoothPart<'a> {
    x: &'a Mat,
    gram_sq: &'a Mat,
    p: Vector,
    q: Vector,
    ftf_sq: f64,
    coef: f64,
    r: usize,
    mmd: Discrepancy,
}

impl<'a> SmoothPart<'a> {
    pub(crate) fn new(
        ctx: &CausalContext,
        x: &'a Mat,
        gram: &'a ViewGram,
        xf: &Mat,
        ftf_sq: f64,
        tau: &[f64],
        beta: f64,
    ) -> Self {
        let n = x.ncols() as f64;
        let r = ctx.prototype;
        let a = ctx.treatment.contrast();
        let w = Vector::from_fn(tau.len(), |i, _| a[i] * tau[i]);
        let mut p = gram.gram.column(r).into_owned();
        p[r] = 0.0;
        let q = Vector::from_fn(x.nrows(), |k, _| xf.row(k).norm_squared());
        let mmd = match ctx.kernel {
            Kernel::Linear => {
                let xw = x * &w;
                Discrepancy::Linear {
                    b: xw.component_mul(&xw),
                }
            }
            Kernel::Gaussian { bandwidth } => Discrepancy::Gaussian { w, bandwidth },
        };
        Self {
            x,
            gram_sq: &gram.gram_sq,
            p,
            q,
            ftf_sq,
            coef: beta / (n * n),
            r,
            mmd,
        }
    }

    /// Value and gradient at the full-length indicator `e` (`e_r = 0`).
    pub(crate) fn eval(&self, e: &Vector) -> (f64, Vector) {
        let s = e.component_mul(e);
        let ms = self.gram_sq * &s;
        let mut value = s.dot(&ms) - 2.0 * s.dot(&self.q) + self.ftf_sq - e.dot(&self.p);
        let mut dvalue_ds = 2.0 * &ms - 2.0 * &self.q;
        if self.coef != 0.0 {
            let (mmd, dmmd_ds) = self.discrepancy(&s);
            value += self.coef * mmd;
            dvalue_ds += self.coef * dmmd_ds;
        }
        let mut grad = 2.0 * e.component_mul(&dvalue_ds) - &self.p;
        grad[self.r] = 0.0;
        (value, grad)
    }

    /// Weighted discrepancy as a function of `s` and its derivative in `s`.
    fn discrepancy(&self, s: &Vector) -> (f64, Vector) {
        match &self.mmd {
            Discrepancy::Linear { b } => (s.dot(b), b.clone()),
            Discrepancy::Gaussian { w, bandwidth } => {
                let x = self.x;
                let n = x.ncols();
                let mut y = x.clone();
                for k in 0..x.nrows() {
                    y.row_mut(k).scale_mut(s[k].sqrt());
                }
                let inner = y.transpose() * &y;
                let denom = 2.0 * bandwidth * bandwidth;
                let u = Mat::from_fn(n, n, |i, j| {
                    let d2 = (inner[(i, i)] + inner[(j, j)] - 2.0 * inner[(i, j)]).max(0.0);
                    w[i] * w[j] * (-d2 / denom).exp()
                });
                let value = u.sum();
                let row_sums = Vector::from_fn(n, |i, _| u.row(i).sum());
                let xu = x * &u;
                let sq = x.component_mul(x);
                let deriv = Vector::from_fn(x.nrows(), |k, _| {
                    let spread = 2.0 * sq.row(k).transpose().dot(&row_sums) - 2.0 * xu.row(k).dot(&x.row(k));
                    -spread / denom
                });
                (value, deriv)
            }
        }
    }
}

/// Smooth part of the indicator objective for one context, evaluated at its
/// current indicator, with the analytic gradient.
pub fn indicator_objective(ctx: &CausalContext, x: &Mat, tau: &[f64], f: &Mat, beta: f64) -> IndicatorEval {
    let gram = ViewGram::new(x);
    let xf = x * f;
    let ftf = f.transpose() * f;
    let part = SmoothPart::new(ctx, x, &gram, &xf, ftf.norm_squared(), tau, beta);
    let (value, grad) = part.eval(&ctx.full_indicator());
    let r = ctx.prototype;
    let gradient = grad
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != r)
        .map(|(_, &g)| g)
        .collect();
    IndicatorEval { value, gradient }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IndicatorReport {
    /// Prototypes whose line search fell below the minimum step.
    pub stalled: Vec<usize>,
    /// Composite objective (smooth + ϱ‖e‖₁) over accepted steps, per context.
    pub traces: Vec<Vec<f64>>,
}

/// Run proximal gradient on every context of one view. `gram` and `x` belong to
/// that view; `tau` and `f` are held fixed.
pub fn update_indicators(
    contexts: &mut [CausalContext],
    x: &Mat,
    gram: &ViewGram,
    tau: &[f64],
    f: &Mat,
    params: &HyperParams,
) -> IndicatorReport {
    let xf = x * f;
    let ftf_sq = (f.transpose() * f).norm_squared();
    let results: Vec<(bool, Vec<f64>)> = contexts
        .par_iter_mut()
        .map(|ctx| {
            let part = SmoothPart::new(ctx, x, gram, &xf, ftf_sq, tau, params.beta);
            prox_descent(ctx, &part, params.varrho)
        })
        .collect();
    let mut report = IndicatorReport::default();
    for (ctx, (stalled, trace)) in contexts.iter().zip(results) {
        if stalled {
            log::warn!("indicator line search stalled for view {} prototype {}", ctx.view, ctx.prototype);
            report.stalled.push(ctx.prototype);
        }
        report.traces.push(trace);
    }
    report
}

fn prox_descent(ctx: &mut CausalContext, part: &SmoothPart<'_>, varrho: f64) -> (bool, Vec<f64>) {
    let r = ctx.prototype;
    let mut e = ctx.full_indicator();
    let (mut smooth, mut grad) = part.eval(&e);
    let mut composite = smooth + varrho * e.sum();
    let mut trace = vec![composite];
    let mut step = ctx.step.unwrap_or(1.0);
    let mut stalled = false;
    for _ in 0..MAX_PROX_STEPS {
        let accepted = loop {
            let trial: Vec<f64> = (e.clone() - step * &grad).iter().copied().collect();
            let mut next = Vector::from_vec(prox_l1_box(&trial, step, varrho));
            next[r] = 0.0;
            let moved = (&next - &e).norm_squared();
            if moved == 0.0 {
                break Some((next, smooth, grad.clone(), composite));
            }
            let (s_next, g_next) = part.eval(&next);
            let c_next = s_next + varrho * next.sum();
            if c_next <= composite - ARMIJO / step * moved {
                break Some((next, s_next, g_next, c_next));
            }
            step *= 0.5;
            if step < MIN_STEP {
                break None;
            }
        };
        let Some((next, s_next, g_next, c_next)) = accepted else {
            stalled = true;
            step = MIN_STEP;
            break;
        };
        let change = (&next - &e).norm() / e.norm().max(1e-12);
        e = next;
        smooth = s_next;
        grad = g_next;
        composite = c_next;
        trace.push(composite);
        if change < PROX_TOL {
            break;
        }
        step *= 2.0;
    }
    ctx.set_full_indicator(&e);
    ctx.step = Some(step);
    (stalled, trace)
}
