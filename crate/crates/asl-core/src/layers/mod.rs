//! The layers the classifier is assembled from.

pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod init;
pub mod pool;

pub use batchnorm::{BatchNorm, BnCache};
pub use conv::{Conv2d, ConvCache};
pub use dense::{Dense, DenseCache};
pub use dropout::Dropout;
pub use pool::{MaxPool2x2, PoolCache};
