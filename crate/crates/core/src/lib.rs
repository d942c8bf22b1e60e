pub mod baselines;
pub mod dataset;
pub mod env;
pub mod error;
pub mod harness;
pub mod meta;
pub mod nn;
pub mod rng;
pub mod trainers;

mod codec;

pub use error::{Error, Result};

// Training interleaves short-lived activation buffers with long-lived
// transitions; glibc malloc fragments badly under that pattern.
#[global_allocator]
static ALLOC: mimalloc::MiMalloc = mimalloc::MiMalloc;
