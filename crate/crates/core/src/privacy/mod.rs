//! Privacy calibration and accounting for both parties.

mod ap;
mod composition;
mod config;
mod det;
mod pp;
pub mod quadrature;
mod utility;

pub use ap::{ap_condition, ap_sensitivity_budget, calibrate_c, mu_logistic};
pub use composition::{
    advanced_epsilon, compose, compose_parallel, schedule_queries, Budget, Composition,
    CompositionMode, QuerySchedule,
};
pub use config::{
    budget_schedule, calibrate, Accountant, CalibratedParams, PartyBudgets, PpScope, PrivacyConfig,
};
pub use det::{active_block_covariance, det_ratio, log_det, noise_covariance};
pub use pp::{
    calibrate_sigma2, pp_abc, pp_delta, pp_k_eigs, DeltaEstimate, QuadFormSampler,
    Sigma2Calibration, DEFAULT_MC_SAMPLES,
};
pub use utility::{normal_cdf, utility_bound, UtilityBound};
