//! A small residual CNN for (x, y) regression, written against plain `f64`
//! buffers. Every layer has a hand-written backward pass; `gradcheck`
//! compares them against central finite differences.

pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod model;
mod tensor;

use serde::{Deserialize, Serialize};

pub use loss::mse_loss;
pub use model::{Block, ConvBn, ForwardCache, ModelState, NamedArray, ResNetConfig};
pub use tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}
