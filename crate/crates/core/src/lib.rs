//! Peer-to-peer energy market clearing with dynamic operating envelopes.
//!
//! Prosumers negotiate bilateral trades and grid injection envelopes with the
//! distribution system operator through a censored consensus ADMM loop. The
//! network side is a branch-flow second-order cone relaxation on radial feeders.

pub mod conic;
pub mod coordinator;
pub mod distflow;
pub mod dso;
pub mod netmodel;
pub mod prosumer;
