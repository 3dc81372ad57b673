//! Dependency-light numeric substrate for the Q-networks: a parameter
//! container, its checkpoint encoding, and a small CNN with analytic
//! gradients.

pub mod checkpoint;
mod network;
mod params;
mod pool;

pub use checkpoint::{deserialize, read_checkpoint, serialize, write_checkpoint, CheckpointError};
pub use network::{argmax, backward, forward, forward_observations, recycle, Layer, NetworkError, NetworkSpec, Target};
pub use params::{ParamError, Parameter, ParameterSet};
