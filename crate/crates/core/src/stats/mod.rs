//! Estimators and convergence diagnostics.

pub mod bootstrap;
pub mod dist;
pub mod fit;
pub mod gof;

pub use bootstrap::{
    bootstrap_mean_se, bootstrap_se, multinomial, resample_counts, DEFAULT_RESAMPLES,
};
pub use dist::{tv_distance, v_gamma_distance, EmpiricalDistribution, Geometry, Masses};
pub use fit::{
    drift_fit, geometric_rate_fit, noise_floor_bound, stable_drift_limit, DriftFit, DriftProbe,
    GuardPolicy, RateFit, RatePoint,
};
pub use gof::{
    chi_square_gof, chi_square_independence, ks_distance, ks_test, ks_two_sample, TestOutcome,
    KS_MIN_SAMPLES,
};
