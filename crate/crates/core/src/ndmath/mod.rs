//! Dense tensors, the layer kernels with hand-written backward passes, the
//! losses, Adam and weight clipping.

pub mod gradcheck;
mod layers;
mod loss;
mod optim;
mod tensor;

pub use layers::{
    leaky_relu, leaky_relu_backward, softmax_rows, softmax_rows_backward, BatchNorm,
    BatchNormCache, Linear, Mode, BN_EPS, BN_MOMENTUM,
};
pub use loss::{cross_entropy, cross_entropy_backward, l1_loss, l1_loss_backward, PROB_FLOOR};
pub use optim::{adam_step, clip_weights, AdamConfig, AdamState};
pub use tensor::Tensor;
