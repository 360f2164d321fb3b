//! Correlation behaviors on multi-source quantum networks: scenario
//! construction, polynomial Bell inequality evaluation, classical-model
//! search, a correlated-source eavesdropper simulation, and
//! device-independent security bounds.

pub mod attack;
pub mod behavior;
pub mod classical;
pub mod error;
pub mod inequality;
pub mod quantum;
pub mod scenario;
pub mod security;
pub mod topology;

pub use behavior::{AgentShape, Behavior};
pub use error::{Error, Result};
pub use topology::{
    check_independences, make_repeater_topology, make_star_topology, NetworkTopology,
};
