//! Small dense networks with reverse-mode gradients and Adam.

pub mod checkpoint;
pub mod fd;
pub mod mlp;
pub mod optim;
pub mod policy;
pub mod tape;

pub use checkpoint::Checkpoint;
pub use mlp::{Mlp, Module};
pub use optim::{expectile_loss, gradient, Adam, AdamConfig};
pub use policy::GaussianPolicy;
pub use tape::{Gradients, Tape, Var};
