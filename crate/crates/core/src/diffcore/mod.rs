//! Reverse-mode differentiable compute core: tape, dense networks,
//! optimizers and checkpoints.

pub mod checkpoint;
mod network;
mod optim;
mod tape;

pub use network::{parameter_count, stack_rows, Activation, BoundNetwork, DenseNetwork, LEAKY_RELU_SLOPE};
pub use optim::{OptimizerKind, OptimizerState};
pub use tape::{Gradients, Matrix, Tape, Var};
