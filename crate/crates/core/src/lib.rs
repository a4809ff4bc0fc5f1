//! Flow-level simulation of power-aware flow scheduling in FatTree data
//! center networks.
//!
//! * [`topology`]: k-ary FatTree construction and equal-cost path enumeration.
//! * [`power`]: chassis/linecard/port switch power model with a sleeping mode.
//! * [`flowsim`]: max-min fair rates and time-to-complete simulation.
//! * [`scheduler`]: the four combination-based scheduling variants and the
//!   two shortest-path baselines.
//! * [`traffic`]: seeded one-to-one Far traffic scenarios.
//! * [`experiment`]: parameter sweeps and result output.

pub mod error;
pub mod experiment;
pub mod flowsim;
pub mod power;
pub mod scheduler;
pub mod topology;
pub mod traffic;

pub use error::{Error, Result};
pub use flowsim::{Allocation, Flow, FlowId};
pub use power::PowerProfile;
pub use scheduler::{Scheduler, Variant};
pub use topology::{build_fat_tree, FatTree, Path};
pub use traffic::{FlowRequest, TrafficScenario};
