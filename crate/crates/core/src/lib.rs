//! Learning-rate dropout for gradient-descent optimizers.
//!
//! The optimizers in [`optim`] implement SGDM, RMSprop, Adam, AMSGrad and
//! RAdam behind one step function. Learning-rate dropout samples a Bernoulli
//! keep mask per parameter element at every step and only moves the kept
//! elements; the moment accumulators always see the full gradient.
//!
//! The numeric types are generic over [`Scalar`] (`f32` or `f64`). The
//! aliases below fix the scalar to `f64`, which every experiment uses.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod network;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod tensor;
pub mod testfn;

pub use error::{Error, Result};
pub use rng::Rng;
pub use scalar::Scalar;

pub type Tensor = tensor::Tensor<f64>;
pub type Mlp = network::Mlp<f64>;
pub type Batch = network::Batch<f64>;
pub type Dataset = data::Dataset<f64>;
pub type OptimizerState = optim::OptimizerState<f64>;
pub type Optimizer = optim::Optimizer<f64>;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Mlp32 = network::Mlp<f32>;
pub type Dataset32 = data::Dataset<f32>;
pub type Optimizer32 = optim::Optimizer<f32>;
