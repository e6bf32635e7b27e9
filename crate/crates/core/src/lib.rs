//! Relay placement in jammed wireless networks.
//!
//! A deployment of relays between a source and a destination is scored by
//! the max-flow of its channel-capacity graph. Graph networks learn that
//! score (MFL) or the improving directions directly (GL), and the learned
//! surrogates drive gradient-style placement updates.

pub mod channel;
pub mod datagen;
pub mod flow;
pub mod harness;
pub mod models;
pub mod nn;
pub mod optimize;
pub mod records;
pub mod rng;
pub mod spectral;
