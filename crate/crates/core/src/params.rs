use serde::{Deserialize, Serialize};

use crate::dataset::MultiViewDataset;
use crate::error::{Error, Result};

/// Which parts of the causal regularizer are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// Complete model.
    #[default]
    Full,
    /// Spectral regression only: no balancing, no association terms, uniform weights.
    NoCausal,
    /// Every remaining feature is a confounder: indicators pinned at one.
    AllConfounders,
}

/// Kernel used for the balancing discrepancy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    #[default]
    Linear,
    /// Gaussian kernel, bandwidth from the median pairwise distance of the
    /// unmasked remainder features.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Weight of the τ-weighted regression term.
    pub alpha: f64,
    /// Weight of the balancing discrepancy.
    pub beta: f64,
    /// Weight of the row-sparsity penalty on each projection.
    pub lambda: f64,
    /// Embedding dimension (and cluster count).
    pub c: usize,
    /// Prototype features per view.
    pub m: usize,
    /// Neighbors per sample in the similarity graph.
    pub k_nn: usize,
    /// Penalty enforcing `FᵀF = I`.
    pub rho: f64,
    /// ℓ₁ weight on the confounding indicators.
    pub varrho: f64,
    /// Smoothing inside the ℓ₂,₁ reweighting.
    pub epsilon: f64,
    pub max_iter: usize,
    /// Stop when the relative objective change drops below this.
    pub tol: f64,
    pub ablation: Ablation,
    pub kernel: KernelKind,
    /// Stop refreshing prototypes after this many outer iterations.
    pub freeze_prototypes_after: Option<usize>,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            lambda: 1.0,
            c: 4,
            m: 15,
            k_nn: 5,
            rho: 1e3,
            varrho: 1e-1,
            epsilon: 1e-8,
            max_iter: 50,
            tol: 1e-6,
            ablation: Ablation::Full,
            kernel: KernelKind::Linear,
            freeze_prototypes_after: None,
        }
    }
}

impl HyperParams {
    /// Check the parameters against a dataset's dimensions.
    pub fn validate(&self, ds: &MultiViewDataset) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        for (name, w) in [("alpha", self.alpha), ("beta", self.beta), ("lambda", self.lambda)] {
            if !(w >= 0.0 && w.is_finite()) {
                return bad(format!("{name} must be a finite nonnegative number, got {w}"));
            }
        }
        for (name, w) in [
            ("rho", self.rho),
            ("varrho", self.varrho),
            ("epsilon", self.epsilon),
            ("tol", self.tol),
        ] {
            if !(w > 0.0 && w.is_finite()) {
                return bad(format!("{name} must be positive, got {w}"));
            }
        }
        let n = ds.n_samples();
        if self.c == 0 || self.c > n {
            return bad(format!("c = {} must lie in 1..={n}", self.c));
        }
        let min_d = ds.dims().into_iter().min().unwrap_or(0);
        if self.c > min_d {
            return bad(format!("c = {} exceeds the smallest view dimension {min_d}", self.c));
        }
        if self.m == 0 || self.m + 1 > min_d {
            return bad(format!("m = {} must lie in 1..={}", self.m, min_d.saturating_sub(1)));
        }
        if self.k_nn == 0 || self.k_nn >= n {
            return bad(format!("k_nn = {} must lie in 1..{n}", self.k_nn));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive".into());
        }
        Ok(())
    }

    pub fn causal(&self) -> bool {
        self.ablation != Ablation::NoCausal
    }
}
