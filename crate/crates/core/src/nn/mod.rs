//! Differentiable building blocks shared by the extractor, the mask
//! generators and the training loop.

pub mod adam;
pub mod params;
pub mod tape;

pub use adam::{clip_global_norm, Adam};
pub use params::{Bound, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Tensor, Var};
