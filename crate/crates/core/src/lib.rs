//! Packet-level dragonfly network simulation driven by communication
//! skeletons.
//!
//! Workloads are written in a small coNCePTuaL-style language ([`dsl`]),
//! compiled into per-rank operation streams ([`skeleton`]) and executed by
//! a discrete-event engine ([`engine`]) on a 1D or 2D dragonfly
//! ([`network`]). [`experiment`] ties placement, simulation and metric
//! export together.

pub mod dsl;
pub mod engine;
pub mod experiment;
pub mod metrics;
pub mod network;
pub mod placement;
pub mod rng;
pub mod skeleton;
pub mod workloads;

pub use dsl::{Binding, DslError, Program, ValidatedProgram};
pub use engine::{run, EngineConfig, EngineError, Job, RunOutput};
pub use experiment::{ExperimentConfig, ExperimentError, JobConfig, Manifest};
pub use metrics::{MetricsStore, Summary};
pub use network::{LinkClass, Network, NetworkError, NodeId, RouterId, Routing, TopologyConfig, Variant};
pub use placement::{place, Placement, PlacementError, Policy};
pub use skeleton::{audit, AuditError, AuditReport, SkeletonOp, SkeletonProgram, SkeletonRegistry};
pub use workloads::{shipped_registry, WorkloadSpec, WORKLOADS};
