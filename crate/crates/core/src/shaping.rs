//! Fixed shaping operators for the structured path.
//!
//! An operator is stored both by its constructive description and as a
//! cached dense `d×d` matrix. Operators are never trained.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{matmul, matmul_nt, qr_orthonormal, spectral_norm, DenseMatrix};
use crate::rng::{gaussian_matrix, seeded};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub enum ShapingKind<T> {
    Identity,
    /// `CᵀdiagL C` with `C` the orthonormal DCT-II and `L` a low-frequency mask.
    DctLowPass { keep_fraction: T, kept: usize },
    /// `scale·QQᵀ` with `Q` a seeded random orthonormal `d×rank` basis.
    LowRankProjection { rank: usize, scale: T, seed: u64 },
    Diagonal { entries: Vec<T> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapingOperator<T> {
    kind: ShapingKind<T>,
    dim: usize,
    materialized: DenseMatrix<T>,
}

/// Serializable description of an operator, resolved against a layer width
/// by [`ShapingSpec::build`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapingSpec {
    Identity,
    DctLowPass {
        keep_fraction: f64,
    },
    LowRank {
        rank: usize,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        seed: u64,
    },
    Diagonal {
        entries: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl ShapingSpec {
    pub fn build<T: Scalar>(&self, dim: usize) -> Result<ShapingOperator<T>> {
        match self {
            ShapingSpec::Identity => Ok(ShapingOperator::identity(dim)),
            ShapingSpec::DctLowPass { keep_fraction } => make_dct_lowpass(dim, T::of(*keep_fraction)),
            ShapingSpec::LowRank { rank, scale, seed } => {
                make_low_rank_projection(dim, *rank, T::of(*scale), *seed)
            }
            ShapingSpec::Diagonal { entries } => {
                if entries.len() != dim {
                    return Err(Error::shape("diagonal shaping", (entries.len(), 1), (dim, 1)));
                }
                make_diagonal(&entries.iter().map(|&x| T::of(x)).collect::<Vec<_>>())
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            ShapingSpec::Identity => "identity".into(),
            ShapingSpec::DctLowPass { keep_fraction } => format!("dct_lowpass({keep_fraction})"),
            ShapingSpec::LowRank { rank, scale, .. } => format!("low_rank(r={rank},s={scale})"),
            ShapingSpec::Diagonal { .. } => "diagonal".into(),
        }
    }
}

/// Orthonormal DCT-II matrix: `C[k,i] = α_k cos(πk(2i+1)/(2d))`.
pub fn dct2_matrix<T: Scalar>(d: usize) -> DenseMatrix<T> {
    let df = d as f64;
    DenseMatrix::from_fn(d, d, |k, i| {
        let alpha = if k == 0 { (1.0 / df).sqrt() } else { (2.0 / df).sqrt() };
        let angle = std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2.0 * df);
        T::of(alpha * angle.cos())
    })
}

pub fn make_dct_lowpass<T: Scalar>(d: usize, keep_fraction: T) -> Result<ShapingOperator<T>> {
    if d == 0 {
        return Err(Error::Precondition("DCT low-pass needs d >= 1".into()));
    }
    if !(keep_fraction > T::zero() && keep_fraction <= T::one()) {
        return Err(Error::Degenerate(format!(
            "keep_fraction {keep_fraction} outside (0, 1]"
        )));
    }
    let kept = (keep_fraction.as_f64() * d as f64).ceil() as usize;
    if kept == 0 {
        return Err(Error::Degenerate("DCT low-pass keeps no frequency".into()));
    }
    let kept = kept.min(d);
    let c = dct2_matrix::<T>(d);
    // CᵀLC = Σ_{k<kept} c_k c_kᵀ
    let low = DenseMatrix::from_fn(kept, d, |k, i| c[(k, i)]);
    let s = crate::linalg::matmul_tn(&low, &low)?;
    Ok(ShapingOperator {
        kind: ShapingKind::DctLowPass { keep_fraction, kept },
        dim: d,
        materialized: s,
    })
}

pub fn make_low_rank_projection<T: Scalar>(d: usize, rank: usize, scale: T, seed: u64) -> Result<ShapingOperator<T>> {
    if rank == 0 || rank > d {
        return Err(Error::Precondition(format!("projection rank {rank} outside 1..={d}")));
    }
    if !(scale > T::zero()) {
        return Err(Error::Precondition("projection scale must be positive".into()));
    }
    let mut rng = seeded(seed);
    let q = qr_orthonormal(&gaussian_matrix::<T>(&mut rng, d, rank))?;
    let s = matmul_nt(&q, &q)?.scale(scale);
    Ok(ShapingOperator {
        kind: ShapingKind::LowRankProjection { rank, scale, seed },
        dim: d,
        materialized: s,
    })
}

pub fn make_diagonal<T: Scalar>(entries: &[T]) -> Result<ShapingOperator<T>> {
    if entries.iter().any(|x| !x.is_finite()) {
        return Err(Error::Precondition("diagonal entries must be finite".into()));
    }
    Ok(ShapingOperator {
        kind: ShapingKind::Diagonal {
            entries: entries.to_vec(),
        },
        dim: entries.len(),
        materialized: DenseMatrix::from_diag(entries),
    })
}

impl<T: Scalar> ShapingOperator<T> {
    pub fn identity(dim: usize) -> Self {
        Self {
            kind: ShapingKind::Identity,
            dim,
            materialized: DenseMatrix::identity(dim),
        }
    }

    /// Wraps an arbitrary fixed matrix (used when loading saved networks).
    pub(crate) fn from_parts(kind: ShapingKind<T>, materialized: DenseMatrix<T>) -> Self {
        Self {
            kind,
            dim: materialized.rows(),
            materialized,
        }
    }

    pub fn kind(&self) -> &ShapingKind<T> {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.materialized
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, ShapingKind::Identity)
    }

    /// Operator 2-norm. Closed form where the kind provides one.
    pub fn spectral_norm(&self) -> T {
        match &self.kind {
            ShapingKind::Identity => T::one(),
            ShapingKind::DctLowPass { .. } => T::one(),
            ShapingKind::LowRankProjection { scale, .. } => *scale,
            ShapingKind::Diagonal { entries } => entries.iter().fold(T::zero(), |m, &x| m.max(x.abs())),
        }
    }

    /// Power-iteration estimate on the materialized matrix.
    pub fn spectral_norm_numeric(&self) -> T {
        spectral_norm(&self.materialized)
    }

    /// `S·X` for a `d×batch` matrix `X`.
    pub fn apply(&self, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if x.rows() != self.dim {
            return Err(Error::shape("shaping apply", (self.dim, self.dim), x.shape()));
        }
        match &self.kind {
            ShapingKind::Identity => Ok(x.clone()),
            ShapingKind::Diagonal { entries } => {
                let mut out = x.clone();
                for (i, &e) in entries.iter().enumerate() {
                    out.row_mut(i).iter_mut().for_each(|v| *v *= e);
                }
                Ok(out)
            }
            _ => matmul(&self.materialized, x),
        }
    }

    /// `Sᵀ·G`, the backward pass of [`apply`](Self::apply).
    pub fn apply_transpose(&self, g: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if g.rows() != self.dim {
            return Err(Error::shape("shaping apply_transpose", (self.dim, self.dim), g.shape()));
        }
        match &self.kind {
            // Every constructed kind is symmetric, but a loaded matrix need not be.
            ShapingKind::Identity => Ok(g.clone()),
            ShapingKind::Diagonal { .. } => self.apply(g),
            _ => crate::linalg::matmul_tn(&self.materialized, g),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{matmul_tn, svd};
    use crate::rng::gaussian_matrix;
    use crate::Matrix;

    #[test]
    fn dct_matrix_is_orthonormal() {
        for d in [1, 2, 7, 8, 16, 28] {
            let c = dct2_matrix::<f64>(d);
            let g = matmul_tn(&c, &c).unwrap();
            assert!(g.max_abs_diff(&Matrix::identity(d)) <= 1e-10, "d={d}");
        }
    }

    #[test]
    fn full_band_dct_is_identity() {
        let s = make_dct_lowpass::<f64>(12, 1.0).unwrap();
        assert!(s.matrix().max_abs_diff(&Matrix::identity(12)) <= 1e-10);
    }

    #[test]
    fn dct_lowpass_is_symmetric_projection() {
        for frac in [0.1, 0.25, 0.5, 0.9] {
            let s = make_dct_lowpass::<f64>(16, frac).unwrap();
            let m = s.matrix();
            assert!(matmul(m, m).unwrap().max_abs_diff(m) <= 1e-10);
            assert!(m.max_abs_diff(&m.transpose()) <= 1e-12);
            assert!((s.spectral_norm_numeric() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn dct_lowpass_keeps_ceil_fraction() {
        let s = make_dct_lowpass::<f64>(10, 0.25).unwrap();
        assert_eq!(s.kind(), &ShapingKind::DctLowPass { keep_fraction: 0.25, kept: 3 });
        let rank = svd(s.matrix()).unwrap().s.as_slice().iter().filter(|&&x| x > 1e-10).count();
        assert_eq!(rank, 3);
    }

    #[test]
    fn dct_lowpass_removes_highest_frequency() {
        let s = make_dct_lowpass::<f64>(8, 0.25).unwrap();
        let c = dct2_matrix::<f64>(8);
        let c7 = Matrix::from_fn(8, 1, |i, _| c[(7, i)]);
        let out = s.apply(&c7).unwrap();
        assert!(out.frobenius_norm() <= 1e-10);
        let c0 = Matrix::from_fn(8, 1, |i, _| c[(0, i)]);
        assert!(s.apply(&c0).unwrap().max_abs_diff(&c0) <= 1e-12);
    }

    #[test]
    fn dct_lowpass_rejects_bad_fraction() {
        assert!(matches!(make_dct_lowpass::<f64>(8, 0.0), Err(Error::Degenerate(_))));
        assert!(make_dct_lowpass::<f64>(8, 1.5).is_err());
    }

    #[test]
    fn low_rank_projection_examples() {
        let s = make_low_rank_projection::<f64>(6, 6, 1.0, 3).unwrap();
        assert!(s.matrix().max_abs_diff(&Matrix::identity(6)) <= 1e-8);
        let s = make_low_rank_projection::<f64>(16, 4, 0.5, 3).unwrap();
        assert!((s.spectral_norm_numeric() - 0.5).abs() <= 1e-8);
        let sv = svd(s.matrix()).unwrap().s;
        assert_eq!(sv.as_slice().iter().filter(|&&x| x > 1e-10).count(), 4);
        let again = make_low_rank_projection::<f64>(16, 4, 0.5, 3).unwrap();
        assert_eq!(s, again);
        assert_ne!(s, make_low_rank_projection::<f64>(16, 4, 0.5, 4).unwrap());
        assert!(make_low_rank_projection::<f64>(4, 5, 1.0, 0).is_err());
    }

    #[test]
    fn diagonal_examples() {
        let s = make_diagonal(&[1.0f64; 5]).unwrap();
        assert_eq!(s.matrix(), &Matrix::identity(5));
        let s = make_diagonal(&[0.1f64, -0.4, 0.3]).unwrap();
        assert_eq!(s.spectral_norm(), 0.4);
        assert!((s.spectral_norm_numeric() - 0.4).abs() < 1e-9);
        let e1 = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![0.0]]);
        assert_eq!(s.apply(&e1).unwrap().column(0), vec![0.0, -0.4, 0.0]);
    }

    #[test]
    fn apply_matches_materialized_product() {
        let mut rng = seeded(10);
        let x: Matrix = gaussian_matrix(&mut rng, 8, 5);
        let ops = [
            ShapingOperator::identity(8),
            make_dct_lowpass(8, 0.25).unwrap(),
            make_low_rank_projection(8, 3, 0.7, 1).unwrap(),
            make_diagonal(&[0.5, 1.0, -2.0, 0.0, 0.1, 0.2, 0.3, 0.4]).unwrap(),
        ];
        for s in &ops {
            let direct = matmul(s.matrix(), &x).unwrap();
            assert!(s.apply(&x).unwrap().max_abs_diff(&direct) <= 1e-12);
            let back = matmul_tn(s.matrix(), &x).unwrap();
            assert!(s.apply_transpose(&x).unwrap().max_abs_diff(&back) <= 1e-12);
        }
        assert_eq!(ops[0].apply(&x).unwrap(), x);
        let once = ops[1].apply(&x).unwrap();
        let twice = ops[1].apply(&once).unwrap();
        assert!(once.max_abs_diff(&twice) <= 1e-10);
        assert!(ops[0].apply(&Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn spec_builds_each_kind() {
        let json_kinds = [
            ShapingSpec::Identity,
            ShapingSpec::DctLowPass { keep_fraction: 0.25 },
            ShapingSpec::LowRank { rank: 2, scale: 0.5, seed: 1 },
            ShapingSpec::Diagonal { entries: vec![0.1, 0.2, 0.3, 0.4] },
        ];
        for k in json_kinds {
            let s: ShapingOperator<f64> = k.build(4).unwrap();
            assert_eq!(s.dim(), 4);
        }
        assert!(ShapingSpec::Diagonal { entries: vec![1.0] }.build::<f64>(4).is_err());
    }
}
