//! Training engine for a small convolutional ASL fingerspelling classifier.
//!
//! Everything runs on the CPU in a single thread, and every run is bitwise
//! reproducible from a seed: random state is derived by forking named
//! streams from one origin, so adding or reordering consumers elsewhere in
//! the program never shifts the draws a component sees.

pub mod augment;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod synthetic;
pub mod scalar;
pub mod tensor;
pub mod weights;

pub use error::{Error, Result};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tensor::Tensor;
