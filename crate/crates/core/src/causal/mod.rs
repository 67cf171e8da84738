//! Confounder balancing: treatment splits, relaxed confounder masks, the
//! weighted discrepancy and its aggregation over prototype features.

mod balance;
mod context;
mod indicators;
mod prototypes;
mod treatment;

pub use balance::{assemble_balance_system, regression_residuals, BalanceSystem};
pub use context::{build_confounder_context, mmd_weighted, CausalContext, Kernel, ViewGram};
pub use indicators::{
    indicator_objective, update_indicators, IndicatorEval, IndicatorReport, ARMIJO, MAX_PROX_STEPS, MIN_STEP,
    PROX_TOL,
};
pub use prototypes::select_prototypes;
pub use treatment::{binarize_treatment, TreatmentAssignment};

pub(crate) use indicators::SmoothPart;
