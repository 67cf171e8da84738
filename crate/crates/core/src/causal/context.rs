//! Per-prototype confounder structures and the weighted balancing discrepancy.

use serde::{Deserialize, Serialize};

use super::treatment::{binarize_treatment, TreatmentAssignment};
use crate::error::{Error, Result};
use crate::graph::pairwise_distances;
use crate::linalg::{Mat, Vector};

/// Kernel for the discrepancy between weighted group embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    Linear,
    Gaussian { bandwidth: f64 },
}

impl Kernel {
    /// Gram matrix between the columns of `c`.
    pub fn gram(&self, c: &Mat) -> Mat {
        match *self {
            Kernel::Linear => c.transpose() * c,
            Kernel::Gaussian { bandwidth } => {
                let d = pairwise_distances(c);
                let denom = 2.0 * bandwidth * bandwidth;
                d.map(|x| (-x * x / denom).exp())
            }
        }
    }
}

/// Precomputed second moments of one view: `G = XXᵀ` and `G ∘ G`.
#[derive(Debug, Clone)]
pub struct ViewGram {
    pub gram: Mat,
    pub gram_sq: Mat,
}

impl ViewGram {
    pub fn new(x: &Mat) -> Self {
        let gram = x * x.transpose();
        let gram_sq = gram.component_mul(&gram);
        Self { gram, gram_sq }
    }
}

/// The balancing problem attached to one prototype (treatment) feature `r`
/// of view `v`.
///
/// `indicator` is the relaxed confounding indicator over the `d_v − 1`
/// remaining features (in their original order with `r` skipped). The
/// confounders are `C = diag(e)·Z`, where `Z` is the view without row `r`, and
/// the alignment target `P` repeats row `r` of the view `d_v − 1` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalContext {
    pub view: usize,
    pub prototype: usize,
    pub treatment: TreatmentAssignment,
    pub indicator: Vec<f64>,
    pub kernel: Kernel,
    /// Last accepted proximal step, reused as the next starting step.
    #[serde(default)]
    pub step: Option<f64>,
}

pub fn build_confounder_context(
    x: &Mat,
    view: usize,
    r: usize,
    indicator: &[f64],
    kernel: crate::params::KernelKind,
) -> Result<CausalContext> {
    let d = x.nrows();
    if r >= d {
        return Err(Error::InvalidParams(format!("prototype {r} out of range for {d} features")));
    }
    if indicator.len() != d - 1 {
        return Err(Error::ShapeMismatch(format!(
            "indicator has length {}, expected {}",
            indicator.len(),
            d - 1
        )));
    }
    if indicator.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(Error::InvalidParams("indicator entries must lie in [0, 1]".into()));
    }
    let row: Vec<f64> = x.row(r).iter().copied().collect();
    let treatment = binarize_treatment(&row)?;
    let kernel = match kernel {
        crate::params::KernelKind::Linear => Kernel::Linear,
        crate::params::KernelKind::Gaussian => Kernel::Gaussian {
            bandwidth: median_bandwidth(&remove_row(x, r)),
        },
    };
    Ok(CausalContext {
        view,
        prototype: r,
        treatment,
        indicator: indicator.to_vec(),
        kernel,
        step: None,
    })
}

fn median_bandwidth(z: &Mat) -> f64 {
    let d = pairwise_distances(z);
    let n = d.nrows();
    let mut v: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for j in 0..n {
        for i in (j + 1)..n {
            v.push(d[(i, j)]);
        }
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = if v.is_empty() { 1.0 } else { v[v.len() / 2] };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

pub(crate) fn remove_row(x: &Mat, r: usize) -> Mat {
    x.clone().remove_row(r)
}

impl CausalContext {
    /// Indicator over all `d_v` features, zero at the prototype.
    pub fn full_indicator(&self) -> Vector {
        let d = self.indicator.len() + 1;
        let r = self.prototype;
        Vector::from_fn(d, |k, _| match k.cmp(&r) {
            std::cmp::Ordering::Less => self.indicator[k],
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Greater => self.indicator[k - 1],
        })
    }

    pub fn set_full_indicator(&mut self, full: &Vector) {
        let r = self.prototype;
        self.indicator = full
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != r)
            .map(|(_, &e)| e)
            .collect();
    }

    /// `Z`: the view with the prototype row removed.
    pub fn remainder(&self, x: &Mat) -> Mat {
        remove_row(x, self.prototype)
    }

    /// `C = (e 1ᵀ) ∘ Z`.
    pub fn confounders(&self, x: &Mat) -> Mat {
        let mut z = self.remainder(x);
        for (i, &e) in self.indicator.iter().enumerate() {
            z.row_mut(i).scale_mut(e);
        }
        z
    }

    /// `P = 1_{d_v − 1} ⊗ X_r·`.
    pub fn alignment_target(&self, x: &Mat) -> Mat {
        let d = x.nrows();
        let row = x.row(self.prototype);
        Mat::from_fn(d - 1, x.ncols(), |_, j| row[j])
    }

    /// Dense `K` with entries `a_i a_j`.
    pub fn kernel_matrix(&self) -> Mat {
        self.treatment.kernel_matrix()
    }

    /// Indices (within the remainder) with indicator at least 0.5.
    pub fn reported_confounders(&self) -> Vec<(usize, f64)> {
        let r = self.prototype;
        self.indicator
            .iter()
            .enumerate()
            .filter(|(_, &e)| e >= 0.5)
            .map(|(k, &e)| (if k < r { k } else { k + 1 }, e))
            .collect()
    }
}

/// Squared RKHS distance between the τ-weighted treatment and control
/// embeddings of the columns of `c`:
/// `‖(1/|∇|) Σ_{i∈∇} φ(τ_i C_·i) − (1/|Δ|) Σ_{j∈Δ} φ(τ_j C_·j)‖²`.
///
/// Under the linear kernel the weight scales the argument and the embedding
/// alike; for the Gaussian kernel the weight scales the embedding.
pub fn mmd_weighted(c: &Mat, tau: &[f64], t: &TreatmentAssignment, kernel: Kernel) -> Result<f64> {
    if t.treated.is_empty() || t.control.is_empty() {
        return Err(Error::EmptyGroup);
    }
    if c.ncols() != tau.len() || t.len() != tau.len() {
        return Err(Error::LengthMismatch(c.ncols(), tau.len()));
    }
    let a = t.contrast();
    let w = Vector::from_fn(tau.len(), |i, _| a[i] * tau[i]);
    let value = match kernel {
        Kernel::Linear => (c * &w).norm_squared(),
        Kernel::Gaussian { .. } => {
            let k = kernel.gram(c);
            w.dot(&(&k * &w))
        }
    };
    Ok(value.max(0.0))
}
