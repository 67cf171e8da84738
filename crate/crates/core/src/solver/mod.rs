//! Alternating minimization of the penalized objective.

mod checkpoint;
mod fit;
mod rank;
mod state;
mod update;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_BIN, CHECKPOINT_JSON};
pub use fit::{fit, fit_from, fit_problem, refresh_prototypes, FitFailure, FitReport, FitResult, StageTimes};
pub use rank::{rank_features, select_top, top_k, view_quotas, FeatureScore};
pub use state::{build_contexts, initialize, ModelState, Problem, F_INIT_SHIFT, W_INIT_NOISE};
pub use update::{
    minimize_on_simplex, objective, objective_terms, update_e, update_f, update_tau, update_w, LabelUpdate, ObjectiveTerms, TauUpdate,
    F_DAMPING_TRIES, F_GUARD, GPI_ITERS, GPI_TOL, TAU_MAX_STEPS, TAU_TOL,
};
