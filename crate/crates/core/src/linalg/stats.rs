use super::{cholesky, cholesky_solve, matmul, matmul_tn, svd, DenseMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Subtracts each column's mean (`C·H` with `C = I − 11ᵀ/n`, never formed).
pub fn center_columns<T: Scalar>(h: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if h.rows() < 2 {
        return Err(Error::Degenerate(format!(
            "centering needs at least 2 rows, got {}",
            h.rows()
        )));
    }
    let means = h.column_means();
    let mut out = h.clone();
    for i in 0..out.rows() {
        for (x, &m) in out.row_mut(i).iter_mut().zip(&means) {
            *x -= m;
        }
    }
    Ok(out)
}

/// Top-k principal subspace of the (internally centered) rows of `H`.
#[derive(Clone, Debug)]
pub struct PcaBasis<T> {
    /// `d×k`, orthonormal columns.
    pub basis: DenseMatrix<T>,
    /// Leading singular values of the centered matrix (at least `k` of them).
    pub singular_values: Vec<T>,
    /// Set when the k-th and (k+1)-th singular values tie within 1e-12, in
    /// which case the subspace is not uniquely determined.
    pub ambiguous: bool,
}

impl<T: Scalar> PcaBasis<T> {
    /// Number of directions with non-negligible variance.
    pub fn numerical_rank(&self) -> usize {
        let top = self.singular_values.first().copied().unwrap_or_else(T::zero);
        let tol = top * T::of(1e-10);
        self.singular_values.iter().filter(|&&s| s > tol).count()
    }
}

pub fn pca_topk<T: Scalar>(h: &DenseMatrix<T>, k: usize) -> Result<PcaBasis<T>> {
    let (n, d) = h.shape();
    if k == 0 || k > d || k + 1 > n {
        return Err(Error::Precondition(format!(
            "pca_topk requires 1 <= k <= min(rows-1, cols); k={k}, shape={n}x{d}"
        )));
    }
    let hc = center_columns(h)?;
    let dec = svd(&hc)?;
    let s = dec.s.as_slice();
    let ambiguous = s.len() > k && (s[k - 1] - s[k]).abs() <= T::of(1e-12);
    Ok(PcaBasis {
        basis: dec.v.columns(0, k),
        singular_values: s.to_vec(),
        ambiguous,
    })
}

/// Ridge regression from the rows of `H` to the rows of `Z` (both centered
/// internally); returns the in-sample coefficient of determination.
pub fn ridge_fit_r2<T: Scalar>(h: &DenseMatrix<T>, z: &DenseMatrix<T>, lambda: T) -> Result<T> {
    if h.rows() != z.rows() {
        return Err(Error::shape("ridge_fit_r2", h.shape(), z.shape()));
    }
    if lambda < T::zero() {
        return Err(Error::Precondition("ridge lambda must be non-negative".into()));
    }
    let hc = center_columns(h)?;
    let zc = center_columns(z)?;
    let sst = zc.frobenius_norm().powi(2);
    if !(sst > T::zero()) {
        return Err(Error::Undefined("R² of a constant target".into()));
    }
    let mut gram = matmul_tn(&hc, &hc)?;
    for i in 0..gram.rows() {
        gram[(i, i)] += lambda;
    }
    let rhs = matmul_tn(&hc, &zc)?;
    let l = cholesky(&gram)?;
    let beta = cholesky_solve(&l, &rhs)?;
    let resid = zc.sub(&matmul(&hc, &beta)?)?;
    let sse = resid.frobenius_norm().powi(2);
    Ok((T::one() - sse / sst).min(T::one()))
}
