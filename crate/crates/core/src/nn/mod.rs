//! Small from-scratch neural-network kernel.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod lstm;
pub mod optim;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use layers::{Conv1d, Conv2d, Dense, Layer, Padding, Sequential};
pub use lstm::{LstmParams, LstmState};
pub use optim::{Optimizer, OptimizerConfig};
pub use tensor::{Params, Tensor};
