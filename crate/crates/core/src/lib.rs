//! Flows over time in the deterministic fluid-queuing model, with per-edge
//! costs and a global arrival deadline.
//!
//! The crate simulates path-based flows over time exactly (piecewise-linear
//! arithmetic, no time stepping), constructs layered dynamic equilibria,
//! computes throughput- and makespan-optimal flows, and quantifies the price
//! of anarchy of equilibria under both objectives.
//!
//! Modules:
//! * [`pwl`] — piecewise-constant / piecewise-linear function algebra.
//! * [`network`] — graph model, validation, path enumeration, parallel-path
//!   reduction.
//! * [`dynamics`] — the flow-over-time engine: queues, exit times, arrival
//!   labels, throughput, equilibrium verification.
//! * [`nash`] — layered equilibrium construction (closed recursion for
//!   parallel links, fixed-point iteration in general, block-flow compaction).
//! * [`optimal`] — optimal flows: maximum throughput before the deadline and
//!   minimum makespan for a target mass.
//! * [`poa`] — price-of-anarchy reports and closed-form worst-case bounds.
//! * [`instances`] — generators for the tight instance families and random
//!   instances, plus instance file I/O.

pub mod dynamics;
pub mod instances;
pub mod nash;
pub mod network;
pub mod optimal;
pub mod poa;
pub mod pwl;

pub use dynamics::{EdgeState, FlowOverTime, NashReport};
pub use nash::LayeredFlow;
pub use network::{Edge, Link, Network, Path, ValidationReport};
pub use optimal::OptSolution;
pub use poa::PoaReport;
pub use pwl::{MonotonePwl, Pwl, StepFunction};
