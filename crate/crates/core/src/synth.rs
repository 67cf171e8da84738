//! Confounded synthetic multi-view benchmark with known feature roles.
//!
//! Labels depend on the causal features only. Each view also carries a
//! low-dimensional confounder whose mean shifts with the class; spurious
//! features are noisy linear read-outs of that confounder, so they correlate
//! with the labels without causing them. Noise features are independent of
//! everything.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::MultiViewDataset;
use crate::error::{Error, Result};
use crate::linalg::Mat;

pub const CONFOUNDER_DIM: usize = 5;

const STREAM_CAUSAL: u64 = 1;
const STREAM_NUISANCE: u64 = 2;
const STREAM_LAYOUT: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub causal: Vec<usize>,
    pub spurious: Vec<usize>,
    pub noise: Vec<usize>,
    pub classes: usize,
    pub confound_strength: f64,
    pub seed: u64,
    /// Seed for confounders, spurious and noise features; defaults to `seed`.
    pub nuisance_seed: Option<u64>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n: 500,
            causal: vec![10, 10],
            spurious: vec![260, 240],
            noise: vec![150, 150],
            classes: 4,
            confound_strength: 1.5,
            seed: 0,
            nuisance_seed: None,
        }
    }
}

impl SynthSpec {
    pub fn dims(&self) -> Vec<usize> {
        (0..self.causal.len())
            .map(|v| self.causal[v] + self.spurious[v] + self.noise[v])
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let v = self.causal.len();
        if v == 0 || self.spurious.len() != v || self.noise.len() != v {
            return Err(Error::InvalidParams("per-view counts must have equal, nonzero length".into()));
        }
        if self.causal.iter().chain(&self.spurious).chain(&self.noise).any(|&c| c == 0) {
            return Err(Error::InvalidParams("feature counts must be positive".into()));
        }
        if self.classes < 2 || self.n < self.classes {
            return Err(Error::InvalidParams(format!(
                "need 2 <= classes <= n, got classes = {}, n = {}",
                self.classes, self.n
            )));
        }
        if !(self.confound_strength >= 0.0 && self.confound_strength.is_finite()) {
            return Err(Error::InvalidParams("confound_strength must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Causal,
    Spurious,
    Noise,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Causal => "causal",
            Role::Spurious => "spurious",
            Role::Noise => "noise",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub dataset: MultiViewDataset,
    /// `roles[v][i]` is the role of feature `i` of view `v`.
    pub roles: Vec<Vec<Role>>,
}

impl SynthData {
    pub fn indices_with(&self, role: Role) -> Vec<Vec<usize>> {
        self.roles
            .iter()
            .map(|r| (0..r.len()).filter(|&i| r[i] == role).collect())
            .collect()
    }

    pub fn causal_indices(&self) -> Vec<Vec<usize>> {
        self.indices_with(Role::Causal)
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let n = spec.n;
    let n_views = spec.causal.len();

    let mut causal_rng = rng(spec.seed, STREAM_CAUSAL);
    let causal: Vec<Mat> = spec
        .causal
        .iter()
        .map(|&d| Mat::from_fn(d, n, |_, _| gaussian(&mut causal_rng)))
        .collect();
    let total_causal: usize = spec.causal.iter().sum();
    let weights: Vec<f64> = (0..total_causal).map(|_| gaussian(&mut causal_rng)).collect();
    let scores: Vec<f64> = (0..n)
        .map(|j| {
            causal
                .iter()
                .flat_map(|x| x.column(j).iter().copied().collect::<Vec<_>>())
                .zip(&weights)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect();
    let labels = quantile_bins(&scores, spec.classes);

    let mut nuisance = rng(spec.nuisance_seed.unwrap_or(spec.seed), STREAM_NUISANCE);
    let mut layout = rng(spec.seed, STREAM_LAYOUT);
    let mut views = Vec::with_capacity(n_views);
    let mut roles = Vec::with_capacity(n_views);
    for v in 0..n_views {
        let class_means = Mat::from_fn(CONFOUNDER_DIM, spec.classes, |_, _| gaussian(&mut nuisance));
        let conf = Mat::from_fn(CONFOUNDER_DIM, n, |k, j| {
            spec.confound_strength * class_means[(k, labels[j])] + gaussian(&mut nuisance)
        });
        let loadings = Mat::from_fn(spec.spurious[v], CONFOUNDER_DIM, |_, _| gaussian(&mut nuisance));
        let mut spurious = &loadings * &conf / (CONFOUNDER_DIM as f64).sqrt();
        spurious.apply(|x| *x += gaussian(&mut nuisance));
        let noise = Mat::from_fn(spec.noise[v], n, |_, _| gaussian(&mut nuisance));

        let d = spec.causal[v] + spec.spurious[v] + spec.noise[v];
        let mut rows: Vec<(Role, usize)> = (0..spec.causal[v])
            .map(|i| (Role::Causal, i))
            .chain((0..spec.spurious[v]).map(|i| (Role::Spurious, i)))
            .chain((0..spec.noise[v]).map(|i| (Role::Noise, i)))
            .collect();
        rows.shuffle(&mut layout);
        let mut x = Mat::zeros(d, n);
        for (target, &(role, i)) in rows.iter().enumerate() {
            let src = match role {
                Role::Causal => causal[v].row(i),
                Role::Spurious => spurious.row(i),
                Role::Noise => noise.row(i),
            };
            x.set_row(target, &src);
        }
        views.push(x);
        roles.push(rows.into_iter().map(|(r, _)| r).collect());
    }
    Ok(SynthData {
        dataset: MultiViewDataset::new(views, Some(labels))?,
        roles,
    })
}

/// Equal-frequency bins of `scores`; ties share the lower bin.
fn quantile_bins(scores: &[f64], classes: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));
    let n = scores.len();
    let mut labels = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        labels[i] = rank * classes / n;
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shapes() {
        let data = generate(&SynthSpec::default()).unwrap();
        assert_eq!(data.dataset.n_views(), 2);
        assert_eq!(data.dataset.n_samples(), 500);
        assert_eq!(data.dataset.dims(), vec![420, 400]);
        assert_eq!(data.dataset.n_classes(), Some(4));
        assert_eq!(data.causal_indices()[0].len(), 10);
        assert_eq!(data.indices_with(Role::Spurious)[1].len(), 240);
    }

    #[test]
    fn quartile_bins_are_balanced() {
        let bins = quantile_bins(&[0.4, 0.1, 0.3, 0.2, 0.8, 0.7, 0.6, 0.5], 4);
        assert_eq!(bins, vec![1, 0, 1, 0, 3, 3, 2, 2]);
    }
}
