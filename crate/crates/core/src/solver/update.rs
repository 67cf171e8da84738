//! Block updates and the objective they decrease.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::state::{ModelState, Problem};
use crate::causal::{assemble_balance_system, update_indicators, IndicatorReport, SmoothPart};
use crate::error::Result;
use crate::linalg::{power_lambda_max, split_signs, Mat, Vector};
use crate::optim::{gpi_solve, l21_reweight, simplex_project, smoothed_l21, GpiOutcome, TraceProblem};

pub const GPI_ITERS: usize = 30;
pub const GPI_TOL: f64 = 1e-10;
pub const TAU_MAX_STEPS: usize = 500;
pub const TAU_TOL: f64 = 1e-10;
pub const F_GUARD: f64 = 1e-12;
/// Damping attempts when a multiplicative sweep would raise the objective.
pub const F_DAMPING_TRIES: usize = 8;

/// Additive pieces of the penalized objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    /// `α Σ_v Σ_i τ_i ‖X_·iᵀW⁽ᵛ⁾ − F_i·‖²`
    pub regression: f64,
    /// `λ Σ_v Σ_i sqrt(‖W_i·⁽ᵛ⁾‖² + ε)`
    pub sparsity: f64,
    /// `(β/n²) Σ_{v,r} MMD`
    pub balance: f64,
    /// `Σ_{v,r} ‖CᵀC − FFᵀ‖² − Tr(CᵀP)`
    pub association: f64,
    /// `ϱ Σ_{v,r} ‖e‖₁`
    pub indicator_l1: f64,
    /// `Tr(FᵀLF)`
    pub smoothness: f64,
    /// `ρ ‖FᵀF − I‖²`
    pub orthogonality: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.regression
            + self.sparsity
            + self.balance
            + self.association
            + self.indicator_l1
            + self.smoothness
            + self.orthogonality
    }
}

fn weighted_regression(x: &Mat, w: &Mat, f: &Mat, tau: &[f64]) -> f64 {
    let resid = x.transpose() * w - f;
    (0..resid.nrows()).map(|i| tau[i] * resid.row(i).norm_squared()).sum()
}

pub fn objective_terms(problem: &Problem, state: &ModelState) -> ObjectiveTerms {
    let p = &problem.params;
    let views = problem.ds.views();
    let f = &state.f;
    let c = f.ncols();
    let mut terms = ObjectiveTerms::default();
    for (x, w) in views.iter().zip(&state.w) {
        terms.regression += p.alpha * weighted_regression(x, w, f, &state.tau);
        terms.sparsity += p.lambda * smoothed_l21(w, p.epsilon);
    }
    let ftf = f.transpose() * f;
    terms.smoothness = f.dot(&(&problem.graph.cross_view * f));
    terms.orthogonality = p.rho * (&ftf - Mat::identity(c, c)).norm_squared();
    if p.causal() {
        let ftf_sq = ftf.norm_squared();
        for (v, group) in state.contexts.iter().enumerate() {
            let x = &views[v];
            let xf = x * f;
            for ctx in group {
                let e = ctx.full_indicator();
                let assoc = SmoothPart::new(ctx, x, &problem.grams[v], &xf, ftf_sq, &state.tau, 0.0).eval(&e).0;
                let with_mmd = SmoothPart::new(ctx, x, &problem.grams[v], &xf, ftf_sq, &state.tau, p.beta)
                    .eval(&e)
                    .0;
                terms.association += assoc;
                terms.balance += with_mmd - assoc;
                terms.indicator_l1 += p.varrho * e.sum();
            }
        }
    }
    terms
}

pub fn objective(problem: &Problem, state: &ModelState) -> f64 {
    objective_terms(problem, state).total()
}

/// One majorize-minimize step on every projection: reweight the ℓ₂,₁ term at
/// the current `W`, then solve the resulting trace problem by GPI.
pub fn update_w(problem: &Problem, state: &mut ModelState) -> Result<Vec<GpiOutcome>> {
    let p = &problem.params;
    let tau = &state.tau;
    let f = &state.f;
    let outcomes: Vec<Result<GpiOutcome>> = problem
        .ds
        .views()
        .par_iter()
        .zip(state.w.par_iter())
        .map(|(x, w)| {
            let mut xg = x.clone();
            for (j, &t) in tau.iter().enumerate() {
                xg.column_mut(j).scale_mut(t);
            }
            let mut a = &xg * x.transpose() * p.alpha;
            let dvec = l21_reweight(w, p.epsilon);
            for i in 0..a.nrows() {
                a[(i, i)] += p.lambda * dvec[i];
            }
            crate::linalg::symmetrize(&mut a);
            let b = &xg * f * p.alpha;
            gpi_solve(&TraceProblem::new(a, b)?, w, GPI_ITERS, GPI_TOL)
        })
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    for (w, out) in state.w.iter_mut().zip(&outcomes) {
        *w = out.w.clone();
    }
    Ok(outcomes)
}

/// The part of the objective that depends on `F`, up to constants.
struct LabelObjective<'a> {
    problem: &'a Problem,
    xtw: Vec<Mat>,
    /// Per view, the summed squared indicators `Σ_r s_r`.
    mask: Vec<Vector>,
    n_ctx: f64,
    tau: &'a [f64],
}

impl<'a> LabelObjective<'a> {
    fn new(problem: &'a Problem, state: &'a ModelState) -> Self {
        let views = problem.ds.views();
        let xtw = views.iter().zip(&state.w).map(|(x, w)| x.transpose() * w).collect();
        let causal = problem.params.causal();
        let mask = views
            .iter()
            .enumerate()
            .map(|(v, x)| {
                let mut acc = Vector::zeros(x.nrows());
                if causal {
                    for ctx in &state.contexts[v] {
                        let e = ctx.full_indicator();
                        acc += e.component_mul(&e);
                    }
                }
                acc
            })
            .collect();
        let n_ctx = if causal { state.n_contexts() as f64 } else { 0.0 };
        Self {
            problem,
            xtw,
            mask,
            n_ctx,
            tau: &state.tau,
        }
    }

    fn value(&self, f: &Mat) -> f64 {
        let p = &self.problem.params;
        let c = f.ncols();
        let ftf = f.transpose() * f;
        let mut value = 0.0;
        for xtw in &self.xtw {
            let resid = xtw - f;
            value += p.alpha * (0..resid.nrows()).map(|i| self.tau[i] * resid.row(i).norm_squared()).sum::<f64>();
        }
        value += f.dot(&(&self.problem.graph.cross_view * f));
        value += p.rho * (&ftf - Mat::identity(c, c)).norm_squared();
        if self.n_ctx > 0.0 {
            for (x, s) in self.problem.ds.views().iter().zip(&self.mask) {
                let xf = x * f;
                let q = Vector::from_fn(x.nrows(), |k, _| xf.row(k).norm_squared());
                value -= 2.0 * s.dot(&q);
            }
            value += self.n_ctx * ftf.norm_squared();
        }
        value
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelUpdate {
    /// Exponent applied to the multiplicative ratio; 1 for a plain sweep, 0
    /// when every damped sweep would have raised the objective.
    pub exponent: f64,
}

/// One multiplicative sweep on `F` derived from the KKT conditions, damped
/// when it would raise the objective.
pub fn update_f(problem: &Problem, state: &mut ModelState) -> LabelUpdate {
    let p = &problem.params;
    let views = problem.ds.views();
    let obj = LabelObjective::new(problem, state);
    let f = &state.f;
    let (n, c) = f.shape();

    let mut num = Mat::zeros(n, c);
    let mut den = Mat::zeros(n, c);
    for (v, x) in views.iter().enumerate() {
        let mut j = obj.xtw[v].clone();
        for (i, &t) in state.tau.iter().enumerate() {
            j.row_mut(i).scale_mut(t);
        }
        let (jp, jn) = split_signs(&j);
        num += jp * p.alpha;
        den += jn * p.alpha;
        if obj.n_ctx > 0.0 {
            let mut sxf = x * f;
            for (k, &s) in obj.mask[v].iter().enumerate() {
                sxf.row_mut(k).scale_mut(s);
            }
            let q = x.transpose() * sxf;
            let (qp, qn) = split_signs(&q);
            num += qp * 2.0;
            den += qn * 2.0;
        }
    }
    let (lp, ln) = split_signs(&problem.graph.cross_view);
    num += ln * f;
    den += lp * f;
    num += f * (2.0 * p.rho);
    let mut gf = f.clone();
    for (i, &t) in state.tau.iter().enumerate() {
        gf.row_mut(i).scale_mut(t);
    }
    den += gf * (p.alpha * views.len() as f64);
    let xi = 2.0 * (obj.n_ctx + p.rho);
    den += f * (f.transpose() * f) * xi;
    den.add_scalar_mut(F_GUARD);
    let ratio = num.component_div(&den);

    let before = obj.value(f);
    let mut exponent = 1.0;
    for _ in 0..=F_DAMPING_TRIES {
        let candidate = f.zip_map(&ratio, |a, r| a * r.powf(exponent));
        if obj.value(&candidate) <= before {
            state.f = candidate;
            return LabelUpdate { exponent };
        }
        exponent *= 0.5;
    }
    LabelUpdate { exponent: 0.0 }
}

/// Proximal-gradient pass over every indicator column.
pub fn update_e(problem: &Problem, state: &mut ModelState) -> Vec<IndicatorReport> {
    let views = problem.ds.views();
    let tau = state.tau.clone();
    let f = state.f.clone();
    state
        .contexts
        .iter_mut()
        .enumerate()
        .map(|(v, group)| update_indicators(group, &views[v], &problem.grams[v], &tau, &f, &problem.params))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TauUpdate {
    pub steps: usize,
    pub lipschitz: f64,
    /// Subproblem objective before the first and after every accepted step.
    pub trace: Vec<f64>,
}

/// Projected gradient on `(β/n²)·τᵀHτ + α·τᵀg` over the simplex.
pub fn update_tau(problem: &Problem, state: &mut ModelState) -> Result<TauUpdate> {
    let p = &problem.params;
    let sys = assemble_balance_system(&state.contexts, problem.ds.views(), &state.w, &state.f)?;
    let n = state.tau.len() as f64;
    let (tau, report) = minimize_on_simplex(&sys.h, &sys.g, p.beta / (n * n), p.alpha, &state.tau);
    state.tau = tau;
    Ok(report)
}

/// Minimize `quad·τᵀHτ + lin·τᵀg` over the probability simplex from `tau0`
/// (`H` symmetric PSD).
pub fn minimize_on_simplex(h: &Mat, g: &Vector, quad: f64, lin: f64, tau0: &[f64]) -> (Vec<f64>, TauUpdate) {
    let lipschitz = 2.0 * quad * power_lambda_max(h, 50).max(0.0) + 1e-12;
    let mut step = 1.0 / lipschitz;
    let mut tau = Vector::from_vec(simplex_project(tau0));
    let value = |t: &Vector| quad * t.dot(&(h * t)) + lin * t.dot(g);
    let mut current = value(&tau);
    let mut trace = vec![current];
    let mut steps = 0;
    for _ in 0..TAU_MAX_STEPS {
        let grad = h * &tau * (2.0 * quad) + g * lin;
        let (next, next_value) = loop {
            let moved: Vec<f64> = (&tau - &grad * step).iter().copied().collect();
            let next = Vector::from_vec(simplex_project(&moved));
            let v = value(&next);
            if v <= current || step < 1e-300 {
                break (next, v);
            }
            step *= 0.5;
        };
        steps += 1;
        let change = (current - next_value).abs() / current.abs().max(1e-300);
        let settled = next == tau;
        tau = next;
        current = next_value;
        trace.push(current);
        if change < TAU_TOL || settled {
            break;
        }
    }
    (
        simplex_project(tau.as_slice()),
        TauUpdate {
            steps,
            lipschitz,
            trace,
        },
    )
}
