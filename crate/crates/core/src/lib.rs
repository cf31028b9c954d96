//! Guaranteed-delivery ad allocation under the consumption-minimization model.
//!
//! The crate plans per-edge delivery capacities from a max-flow over the
//! expected network, runs online delivery policies against sampled user
//! streams, and measures their traffic consumption against flow-based lower
//! bounds and exact oracles on small instances.
//!
//! The max-flow solver is generic over the integer capacity type and the
//! expectation oracles over the scalar field; the aliases below fix the
//! concrete types used throughout the engine.

pub mod experiments;
pub mod maxflow;
pub mod model;
pub mod planner;
pub mod policies;
pub mod scalar;
pub mod seeding;
pub mod simulator;

pub use maxflow::{ExpectedNetwork, InnerCapacity, MaxFlowNetwork};
pub use model::{load_instance, save_instance, validate, CapacityPlan, Instance, ModelError};
pub use planner::{FlowPlan, PlanVariant};
pub use policies::{DeliveryDecision, PolicyKind};
pub use simulator::{EpisodeRecord, OfflineOptimum};

/// Floating-point scalar used for probabilities and reported expectations.
pub type Real = f64;

/// Exact rational scalar for oracle cross-checks.
pub type ExactReal = scalar::BigRational;

/// Capacity type of the planning networks.
pub type Cap = i64;

/// Flow network with the engine's capacity type.
pub type FlowNetwork = MaxFlowNetwork<Cap>;

/// Expected network with the engine's capacity type.
pub type ExpectedFlowNetwork = ExpectedNetwork<Cap>;
