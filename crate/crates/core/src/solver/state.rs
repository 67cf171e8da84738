use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::causal::{build_confounder_context, select_prototypes, CausalContext, ViewGram};
use crate::dataset::MultiViewDataset;
use crate::error::{Error, Result};
use crate::eval::kmeans;
use crate::graph::{build_laplacian, LaplacianGraph};
use crate::linalg::{bottom_eigenvectors, orthonormality_error, orthonormalize, Mat};
use crate::params::{Ablation, HyperParams};

/// Scale of the seeded perturbation added to the all-ones projection before
/// orthonormalization.
pub const W_INIT_NOISE: f64 = 1e-3;
/// Shift applied to the initial label matrix so multiplicative updates can move it.
pub const F_INIT_SHIFT: f64 = 1e-8;

/// Everything the block updates read but never modify.
#[derive(Debug, Clone)]
pub struct Problem {
    pub ds: MultiViewDataset,
    pub graph: LaplacianGraph,
    pub grams: Vec<ViewGram>,
    pub params: HyperParams,
}

impl Problem {
    pub fn new(ds: MultiViewDataset, params: HyperParams) -> Result<Self> {
        params.validate(&ds)?;
        let graph = build_laplacian(&ds, params.k_nn)?;
        let grams = ds.views().iter().map(ViewGram::new).collect();
        Ok(Self {
            ds,
            graph,
            grams,
            params,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    /// Per-view `d_v × c` projections with orthonormal columns.
    pub w: Vec<Mat>,
    /// `n × c` nonnegative consensus labels.
    pub f: Mat,
    /// Sample weights on the probability simplex.
    pub tau: Vec<f64>,
    /// Per-view prototype sets `Λ⁽ᵛ⁾`, sorted ascending.
    pub prototypes: Vec<Vec<usize>>,
    /// Per-view balancing contexts for the non-degenerate prototypes; these
    /// hold the indicator columns of `E⁽ᵛ⁾`.
    pub contexts: Vec<Vec<CausalContext>>,
    pub iteration: usize,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl ModelState {
    /// `E⁽ᵛ⁾` as a `(d_v − 1) × |contexts|` matrix.
    pub fn indicator_matrix(&self, v: usize) -> Mat {
        let ctxs = &self.contexts[v];
        let rows = ctxs.first().map_or(0, |c| c.indicator.len());
        Mat::from_fn(rows, ctxs.len(), |i, j| ctxs[j].indicator[i])
    }

    pub fn n_contexts(&self) -> usize {
        self.contexts.iter().map(Vec::len).sum()
    }

    /// Violations of the state invariants, empty when all hold.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (v, w) in self.w.iter().enumerate() {
            let err = orthonormality_error(w);
            if err > 1e-6 {
                out.push(format!("view {v}: ‖WᵀW − I‖ = {err:e}"));
            }
        }
        if let Some(min) = self.f.iter().copied().reduce(f64::min) {
            if min < -1e-12 {
                out.push(format!("F has negative entry {min:e}"));
            }
        }
        let sum: f64 = self.tau.iter().sum();
        if (sum - 1.0).abs() > 1e-10 || self.tau.iter().any(|&t| t < 0.0) {
            out.push(format!("τ off the simplex (sum {sum})"));
        }
        for ctx in self.contexts.iter().flatten() {
            if ctx.indicator.iter().any(|e| !(0.0..=1.0).contains(e)) {
                out.push(format!("indicator of view {} prototype {} leaves [0, 1]", ctx.view, ctx.prototype));
            }
        }
        out
    }
}

/// Build balancing contexts for `prototypes`, reusing indicators of
/// prototypes already present in `previous`. New prototypes start from the
/// mean full-length indicator of the previous contexts of the view (all ones
/// when there are none). Constant prototype features are skipped.
pub fn build_contexts(
    x: &Mat,
    view: usize,
    prototypes: &[usize],
    previous: &[CausalContext],
    params: &HyperParams,
) -> Result<Vec<CausalContext>> {
    let d = x.nrows();
    let seed_indicator = if previous.is_empty() || params.ablation == Ablation::AllConfounders {
        crate::linalg::Vector::from_element(d, 1.0)
    } else {
        let mut acc = crate::linalg::Vector::zeros(d);
        for ctx in previous {
            acc += ctx.full_indicator();
        }
        acc / previous.len() as f64
    };
    let mut out = Vec::with_capacity(prototypes.len());
    for &r in prototypes {
        if let Some(old) = previous.iter().find(|c| c.prototype == r) {
            out.push(old.clone());
            continue;
        }
        let e: Vec<f64> = seed_indicator
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != r)
            .map(|(_, &e)| e.clamp(0.0, 1.0))
            .collect();
        match build_confounder_context(x, view, r, &e, params.kernel) {
            Ok(ctx) => out.push(ctx),
            Err(Error::DegenerateSplit) => {
                log::info!("view {view}: prototype {r} is constant and contributes no balancing term");
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Initial state: spectral-clustering labels, uniform weights, all-ones
/// indicators and near-all-ones orthonormal projections.
pub fn initialize(problem: &Problem, seed: u64) -> Result<ModelState> {
    let ds = &problem.ds;
    let params = &problem.params;
    let n = ds.n_samples();
    let c = params.c;

    let (_, vecs) = bottom_eigenvectors(&problem.graph.cross_view, c)?;
    let km = kmeans(&vecs.transpose(), c, seed)?;
    let mut sizes = vec![0usize; c];
    for &l in &km.labels {
        sizes[l] += 1;
    }
    let f = Mat::from_fn(n, c, |i, j| {
        let base = if km.labels[i] == j {
            1.0 / (sizes[j] as f64).sqrt()
        } else {
            0.0
        };
        base + F_INIT_SHIFT
    });

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7);
    let w: Vec<Mat> = ds
        .dims()
        .iter()
        .map(|&d| {
            let perturbed = Mat::from_fn(d, c, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                1.0 + W_INIT_NOISE * z
            });
            orthonormalize(&perturbed)
        })
        .collect();

    let mut prototypes = Vec::with_capacity(ds.n_views());
    let mut contexts = Vec::with_capacity(ds.n_views());
    for (v, x) in ds.views().iter().enumerate() {
        let lambda = select_prototypes(&w[v], params.m);
        if params.causal() {
            contexts.push(build_contexts(x, v, &lambda, &[], params)?);
        } else {
            contexts.push(Vec::new());
        }
        prototypes.push(lambda);
    }

    Ok(ModelState {
        w,
        f,
        tau: vec![1.0 / n as f64; n],
        prototypes,
        contexts,
        iteration: 0,
        objective_trace: Vec::new(),
        converged: false,
    })
}
