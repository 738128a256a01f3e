//! State-vector simulation of GHZ-based multi-step direct communication.
//!
//! The crate is generic over the real scalar (`f32` or `f64`); the aliases below
//! fix it to `f64` for everyday use.

pub mod adversary;
pub mod codec;
pub mod error;
pub mod gate;
pub mod leakage;
pub mod protocol;
pub mod scalar;
pub mod state;
pub mod stats;

pub use codec::{Message, Scheme};
pub use error::{Error, Result};
pub use gate::SingleParticleGate;
pub use scalar::Real;

pub type State = state::StateVector<f64>;
pub type State32 = state::StateVector<f32>;
pub type Family = codec::GhzFamily<f64>;
pub type Channel = adversary::ChannelModel<f64>;
pub type Probe = adversary::ProbeParams<f64>;
