//! Deterministic VANET simulation toolkit.
//!
//! The crate builds vehicular mobility traces under several synthetic models
//! (CityMob-style Simple/Manhattan/Downtown and a MOVE-style flow model over
//! a grid road network), serializes them in the ns-2 movement-trace format,
//! and evaluates AODV routing over them with a discrete-event wireless
//! simulator (two-ray ground propagation, simplified 802.11 CSMA/CA at
//! 2 Mbps). The harness module adds CBR traffic, per-run metrics, and the
//! node-count sweep used to compare mobility models.
//!
//! Everything is a pure function of its configuration and seed: identical
//! inputs produce byte-identical traces, event logs, and result files.

pub mod aodv;
pub mod harness;
pub mod mobility;
pub mod netsim;
pub mod road_network;
pub mod trace_io;

mod quant;
mod rng;

pub use mobility::{
    DamageConfig, DamageEvent, DowntownConfig, MobilityConfig, MobilityError, MobilityModel,
    TraceSet, Waypoint,
};
pub use netsim::{EventLog, PhyConfig, Scenario, Simulation};
pub use road_network::{Axis, RoadNetwork, RouteWeight, SemaphoreSpec};
