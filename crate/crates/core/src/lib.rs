pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod network;
pub mod rng;
pub mod scalar;
pub mod shaping;
pub mod tasks;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision matrix; the default carrier for every experiment.
pub type Matrix = linalg::DenseMatrix<f64>;
pub type Vector = linalg::DenseVector<f64>;
pub type MatrixF32 = linalg::DenseMatrix<f32>;
pub type VectorF32 = linalg::DenseVector<f32>;
