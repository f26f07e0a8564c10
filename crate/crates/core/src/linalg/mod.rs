//! Dense linear algebra used by every other module.

mod decomp;
mod gemm;
mod matrix;
mod stats;

pub use decomp::{
    cholesky, cholesky_solve, qr_orthonormal, spectral_norm, spectral_norm_estimate, svd, SpectralNorm, Svd,
    POWER_MAX_ITER, POWER_TOL,
};
pub use gemm::{gemm, matmul, matmul_nt, matmul_tn, Op};
pub use matrix::{dot, norm2, DenseMatrix, DenseVector};
pub use stats::{center_columns, pca_topk, ridge_fit_r2, PcaBasis};
