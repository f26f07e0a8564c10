//! Dataset generators for every experiment plus IDX (Fashion-MNIST) ingestion.

mod dataset;
mod generators;
pub mod idx;

pub use dataset::{Dataset, Split, Targets};
pub use generators::{
    gen_aligned_regression, gen_alignment, gen_linear_noise_classification, AlignmentParams, CLASSIFICATION_NOISE_VAR,
};
pub use idx::{load_fmnist, load_fmnist_idx, FMNIST_VAL_HOLDOUT};
