//! A small differentiable substrate: dense layers, activations, batch
//! norm, dropout, Gumbel-softmax heads, Adam and gradient checking.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod losses;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use layers::{gumbel_softmax, BatchNorm, Dense, HeadAct, HeadSpan, Heads, Layer, Mode, Net, Param};
pub use losses::{kl_std_normal, log_softmax, softmax_cross_entropy};
pub use tensor::Tensor;
