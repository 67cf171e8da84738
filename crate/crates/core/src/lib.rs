//! Causal multi-view unsupervised feature selection.
//!
//! Features are ranked by the row norms of per-view sparse projections onto
//! a shared spectral embedding. Samples are reweighted so that, for a handful
//! of prototype features per view, the remaining features that act as
//! confounders are balanced between the prototype's treatment and control
//! groups.
//!
//! ```
//! use causa::{fit, rank_features, HyperParams, MultiViewDataset, Mat};
//!
//! let x = Mat::from_fn(6, 12, |i, j| ((i * 7 + j * 3) % 5) as f64 + if j < 6 { 0.0 } else { 4.0 });
//! let ds = MultiViewDataset::new(vec![x], None).unwrap();
//! let params = HyperParams { c: 2, m: 2, k_nn: 3, max_iter: 5, ..Default::default() };
//! let result = fit(&ds, &params, 0).unwrap();
//! let ranking = rank_features(&result.state.w);
//! assert_eq!(ranking[0].len(), 6);
//! ```

pub mod causal;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod graph;
pub mod linalg;
pub mod optim;
pub mod params;
pub mod solver;
pub mod synth;

pub use dataset::{load_dataset, save_dataset, standardize, MultiViewDataset};
pub use error::{Error, Result};
pub use linalg::{Mat, Vector};
pub use params::{Ablation, HyperParams, KernelKind};
pub use solver::{fit, rank_features, FitResult, ModelState};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/datasets.md")]
    struct Datasets;
    #[doc = include_str!("../../../book/src/graphs.md")]
    struct Graphs;
    #[doc = include_str!("../../../book/src/balance.md")]
    struct Balance;
    #[doc = include_str!("../../../book/src/indicators.md")]
    struct Indicators;
    #[doc = include_str!("../../../book/src/solver.md")]
    struct Solver;
    #[doc = include_str!("../../../book/src/evaluation.md")]
    struct Evaluation;
    #[doc = include_str!("../../../book/src/synthetic.md")]
    struct Synthetic;
}
