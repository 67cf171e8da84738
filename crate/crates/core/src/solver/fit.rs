use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::state::{build_contexts, initialize, ModelState, Problem};
use super::update::{objective, update_e, update_f, update_tau, update_w};
use crate::causal::select_prototypes;
use crate::dataset::MultiViewDataset;
use crate::error::Error;
use crate::graph::GraphIssue;
use crate::params::{Ablation, HyperParams};

/// Wall-clock seconds spent in each block of one outer iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub w: f64,
    pub f: f64,
    pub e: f64,
    pub tau: f64,
    pub prototypes: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub converged: bool,
    pub iterations: usize,
    pub graph_issues: Vec<GraphIssue>,
    /// Indicator line searches that hit the minimum step.
    pub stalled_indicators: usize,
    /// Label sweeps that had to be damped.
    pub damped_label_updates: usize,
    pub stage_times: Vec<StageTimes>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub state: ModelState,
    pub report: FitReport,
}

/// A block failure, with the last state that satisfied every invariant.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct FitFailure {
    pub error: Error,
    pub state: Option<Box<ModelState>>,
}

impl From<Error> for FitFailure {
    fn from(error: Error) -> Self {
        Self { error, state: None }
    }
}

pub fn fit(ds: &MultiViewDataset, params: &HyperParams, seed: u64) -> Result<FitResult, FitFailure> {
    let problem = Problem::new(ds.clone(), params.clone())?;
    fit_problem(&problem, seed)
}

/// Alternate the block updates from a fresh initialization.
pub fn fit_problem(problem: &Problem, seed: u64) -> Result<FitResult, FitFailure> {
    let state = initialize(problem, seed)?;
    fit_from(problem, state)
}

/// Continue alternating from `state` until the relative objective change
/// drops below the tolerance or the iteration budget is spent.
pub fn fit_from(problem: &Problem, mut state: ModelState) -> Result<FitResult, FitFailure> {
    let p = &problem.params;
    let mut report = FitReport {
        graph_issues: problem.graph.issues.clone(),
        ..Default::default()
    };
    if state.objective_trace.is_empty() {
        state.objective_trace.push(objective(problem, &state));
    }
    let fail = |error: Error, last: &ModelState| FitFailure {
        error,
        state: Some(Box::new(last.clone())),
    };
    while state.iteration < p.max_iter {
        let last = state.clone();
        let mut times = StageTimes::default();

        let t = Instant::now();
        update_w(problem, &mut state).map_err(|e| fail(e, &last))?;
        times.w = t.elapsed().as_secs_f64();

        let t = Instant::now();
        if update_f(problem, &mut state).exponent < 1.0 {
            report.damped_label_updates += 1;
        }
        times.f = t.elapsed().as_secs_f64();

        if p.ablation == Ablation::Full {
            let t = Instant::now();
            for r in update_e(problem, &mut state) {
                report.stalled_indicators += r.stalled.len();
            }
            times.e = t.elapsed().as_secs_f64();
        }

        if p.causal() {
            let t = Instant::now();
            update_tau(problem, &mut state).map_err(|e| fail(e, &last))?;
            times.tau = t.elapsed().as_secs_f64();

            let frozen = p.freeze_prototypes_after.is_some_and(|k| state.iteration >= k);
            if !frozen {
                let t = Instant::now();
                refresh_prototypes(problem, &mut state).map_err(|e| fail(e, &last))?;
                times.prototypes = t.elapsed().as_secs_f64();
            }
        }

        state.iteration += 1;
        let value = objective(problem, &state);
        if !value.is_finite() {
            return Err(fail(Error::InvalidParams(format!("objective became {value}")), &last));
        }
        let prev = *state.objective_trace.last().unwrap();
        state.objective_trace.push(value);
        report.stage_times.push(times);
        log::debug!("iteration {}: objective {value:.12e}", state.iteration);
        if (prev - value).abs() / prev.abs().max(1e-12) < p.tol {
            state.converged = true;
            break;
        }
    }
    report.converged = state.converged;
    report.iterations = state.iteration;
    Ok(FitResult { state, report })
}

/// Re-cluster the projection rows and rebuild the balancing contexts.
pub fn refresh_prototypes(problem: &Problem, state: &mut ModelState) -> crate::error::Result<()> {
    for (v, x) in problem.ds.views().iter().enumerate() {
        let lambda = select_prototypes(&state.w[v], problem.params.m);
        if lambda != state.prototypes[v] {
            state.contexts[v] = build_contexts(x, v, &lambda, &state.contexts[v], &problem.params)?;
            state.prototypes[v] = lambda;
        }
    }
    Ok(())
}
