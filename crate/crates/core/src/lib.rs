//! Discrete-time simulator and policy-search toolkit for multiproduct batch
//! plant scheduling.
//!
//! The crate models a single-stage plant in which client orders (tasks) are
//! processed as campaigns of batches on parallel units, subject to
//! sequence-dependent cleaning, unit/task release times, uncertain batch
//! processing times and uncertain due dates. A recurrent neural policy maps
//! the plant state to one scheduling decision per unit each period; decisions
//! are restricted to feasible options by construction and scored by the
//! negative sum of makespan and total tardiness.
//!
//! Module overview:
//! - [`instance`]: problem data (tasks, units, eligibility, cleaning), JSON
//!   schema, derived period quantities, bundled case studies.
//! - [`env`]: scenario sampling and the plant state transition function.
//! - [`feasibility`]: feasible decision sets, latent-to-decision rounding,
//!   and the double-allocation penalty.
//! - [`policy`]: the recurrent network, parameter codec and persistence.
//! - [`rollout`]: episode execution and Monte Carlo policy evaluation.
//! - [`risk`]: distribution statistics (VaR/CVaR) and the binomial lower
//!   confidence bound on feasibility.
//! - [`optimizer`]: particle-swarm search hybridised with simulated
//!   annealing and search-space contraction.
//! - [`harness`]: experiment presets, training/validation drivers, an
//!   independent schedule checker, Gantt export and latency measurement.

pub mod env;
pub mod feasibility;
pub mod harness;
pub mod instance;
pub mod optimizer;
pub mod policy;
pub mod risk;
pub mod rollout;
pub mod seeding;
