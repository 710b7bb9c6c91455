//! Robust constrained portfolio choice under drift uncertainty.
//!
//! The drift of a `d`-asset Black–Scholes market is only known to lie in an
//! ellipsoid `K`. An investor with power or log utility and a budget
//! constraint `1ᵀπ = h` maximizes worst-case expected utility; the worst-case
//! drift and robust strategy have a closed form. Filtering an
//! Ornstein–Uhlenbeck drift from returns and expert views yields a
//! time-varying `K_t`, and the [`simulation`] module compares the robust and
//! naive strategies across information structures.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ellipsoid;
pub mod error;
pub mod filters;
pub mod grid;
pub mod linalg;
pub mod market;
pub mod merton;
pub mod rng;
pub mod robust;
pub mod simulation;
pub mod stats;

pub use ellipsoid::{
    confidence_ellipsoid, confidence_ellipsoid_regularized, confidence_radius, Ellipsoid,
};
pub use error::{Error, Result, ValidationError, Violation};
pub use filters::{
    expert_update, kalman_step, propagate, run_filter, stationary_riccati, ExpertOpinion,
    FilterState, FiltrationKind,
};
pub use grid::TimeGrid;
pub use market::{
    validate_drift_model, validate_market, DriftModelParams, MarketParams, UtilityKind,
    ValidatedDriftModel, ValidatedMarket,
};
pub use merton::{
    constraint_geometry, expected_utility, expected_utility_constant, merton_strategy,
    recompose_strategy, transform_market, Allocation, ConstraintGeometry, StepPath,
    TransformedMarket,
};
pub use robust::{
    brute_force_oracle, linear_minimizer, saddle_check, worst_case_drift, InnerSup, RobustSolution,
};
pub use simulation::{
    evaluate_utilities, run_study, simulate_scenario, EvalMode, Evaluation, ExpertDates,
    ExpertScaling, OuScheme, Pipeline, Realized, Scenario, ScenarioGenerator, ScenarioPath,
    StudyConfig, StudyReport, StudyRow,
};
pub use stats::chi2_quantile;
