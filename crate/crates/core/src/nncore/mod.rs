//! Differentiable kernels: dense arrays, the layer primitives the network needs,
//! Adam, and finite-difference gradient checking.

mod activation;
mod adam;
mod batchnorm;
mod conv;
mod dense;
mod gradcheck;
mod param;
mod pool;
mod tensor;

pub use activation::{elu, elu_backward, softmax, softmax_backward};
pub use adam::{adam_step, AdamState};
pub use batchnorm::{batch_norm, batch_norm_backward, BatchNorm, BnCache, BnState, Mode};
pub use conv::{
    conv_time, conv_time_backward, conv_transpose_time, conv_transpose_time_backward, ConvGrads,
    ConvTime, ConvTransposeTime, SameGeometry,
};
pub use dense::{fully_connected, fully_connected_backward, Dense};
pub use gradcheck::{grad_check, grad_check_at, grad_check_fn, GradCheckReport};
pub use param::ParamTensor;
pub use pool::{avg_pool_time, avg_pool_time_backward};
pub use tensor::TensorBuf;
