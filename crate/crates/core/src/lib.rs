//! Core engine for turning source repositories into execution-validated,
//! containerized tools.
//!
//! The pipeline is split into stages that can be driven individually or
//! end-to-end:
//!
//! - [`funnel`]: taxonomy-guided discovery of candidate repositories.
//! - [`analyzer`]: snapshot ingest, build-artifact inventory, evidence assembly.
//! - [`recipe`]: build recipe proposal and the proposer/reviewer refinement loop.
//! - [`executor`]: image construction, minimal-command validation, failure
//!   classification.
//! - [`scheduler`]: budgeted dispatch with long-tail isolation.
//! - [`registry`]: publication of validated tools, domain assignment, search.
//! - [`trace`]: deployment-trace ingest and aggregate analytics.
//! - [`pipeline`]: the `run-all` driver binding the stages together.
//!
//! Every external service is reached through the traits in [`clients`], which
//! ship deterministic offline mocks.

pub mod analyzer;
pub mod clients;
pub mod config;
pub mod digest;
pub mod executor;
pub mod funnel;
pub mod par;
pub mod pipeline;
pub mod recipe;
pub mod registry;
pub mod scheduler;
pub mod taxonomy;
pub mod trace;

pub use config::PipelineConfig;
