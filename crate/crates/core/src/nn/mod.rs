//! Dense-network numeric engine: forward pass, exact backpropagation, Adam,
//! and the scalar losses used by the trainers. Everything runs in `f64`.

mod adam;
pub mod checkpoint;
mod mlp;
mod ops;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_networks, save_networks, NET_MAGIC};
pub use mlp::{Gradients, Mlp, Trace, DEFAULT_HIDDEN};
pub use ops::{argmax, huber, huber_grad, logsumexp, softmax, softmax_xent};
