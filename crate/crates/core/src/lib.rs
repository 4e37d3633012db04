//! Geometry-based UAV trajectory planning for mixed URLLC / eMBB traffic
//! over obstacle-prone mmWave air-to-ground links.
//!
//! Modules, bottom-up:
//! - [`geometry`]: disk overlaps, Apollonius circles, enclosing disks, lattices
//! - [`channel`]: path loss, link budget, fading, Shannon rate
//! - [`world`]: obstacles, line of sight, mobility, coverage predicates
//! - [`planner`]: per-slot position selection (proposed scheme and baseline)
//! - [`simulator`]: slot loop, metrics, parameter sweeps
//! - [`cli`]: config documents, CSV output, replay files

pub mod channel;
pub mod cli;
pub mod geometry;
pub mod planner;
pub mod simulator;
pub mod streams;
pub mod world;

pub use geometry::{Circle, Disk, GridSpec, Point2};
pub use planner::{plan, plan_baseline, FallbackLevel, PlanOutcome};
pub use simulator::{run, Algorithm, RunSummary, SimConfig, SlotMetrics};
pub use world::{Environment, ObstacleBox, Point3, UavState, UserState};
