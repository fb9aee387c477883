//! Motor-imagery EEG decoding with a multi-task network: a convolutional autoencoder
//! whose latent code is shaped jointly by reconstruction, semi-hard triplet metric
//! learning, and a softmax classifier.
//!
//! Numeric kernels and the network are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision used for training (`f32`) and gradient checks (`f64`).

mod binio;
pub mod dataio;
pub mod error;
pub mod harness;
pub mod model;
pub mod nncore;
pub mod preproc;
pub mod scalar;
mod seed;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use seed::derive_seed;

pub type Tensor = nncore::TensorBuf<f32>;
pub type Tensor64 = nncore::TensorBuf<f64>;
pub type Param = nncore::ParamTensor<f32>;
pub type Adam = nncore::AdamState<f32>;

pub type Network = model::Min2Net<f32>;
pub type Network64 = model::Min2Net<f64>;
