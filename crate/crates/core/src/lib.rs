//! Graph-based resilience estimation and enhancement for power distribution
//! networks under stochastic extreme-wind events.
//!
//! The pipeline: synthesize a distribution graph from road/building/substation
//! data ([`network`]), sample spatio-temporal storm scenarios ([`weather`]),
//! break lines through wind/tree fragility models ([`fragility`]), run Monte
//! Carlo damage-and-restoration episodes and score them with the trapezoid
//! resilience metric ([`simulation`]), then site and size solar/battery
//! installations with a customized genetic algorithm that replays the recorded
//! episodes ([`enhance`]).

pub mod enhance;
pub mod fragility;
pub mod geo;
pub mod network;
pub mod rng;
pub mod simulation;
pub mod weather;

pub use geo::{GeoPoint, PatchGrid, PlanarPoint};
pub use network::{Edge, NetworkGraph, Node, NodeKind};
