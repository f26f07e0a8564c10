use super::{dot, norm2, DenseMatrix, DenseVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Thin orthonormal factor of a Householder QR.
///
/// For an `m×n` input with `m ≥ n` returns `Q` (`m×n`) with `QᵀQ = I` and the
/// same column span as the input.
pub fn qr_orthonormal<T: Scalar>(a: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::Precondition(format!(
            "qr_orthonormal needs a square or tall matrix, got {m}x{n}"
        )));
    }
    // Work on columns as contiguous rows.
    let mut r = a.transpose();
    let mut reflectors: Vec<Vec<T>> = Vec::with_capacity(n);
    let scale = a.max_abs().max(T::one());
    let tiny = T::of(1e-12) * scale;

    for j in 0..n {
        let col = &r.row(j)[j..];
        let alpha = norm2(col);
        if alpha <= tiny {
            return Err(Error::Degenerate(format!(
                "rank deficient input: |R[{j},{j}]| = {alpha:e}"
            )));
        }
        let mut v: Vec<T> = col.to_vec();
        let sign = if v[0] >= T::zero() { T::one() } else { -T::one() };
        v[0] += sign * alpha;
        let vnorm = norm2(&v);
        v.iter_mut().for_each(|x| *x /= vnorm);
        // Apply H = I - 2vvᵀ to the trailing columns.
        for c in j..n {
            let row = &mut r.row_mut(c)[j..];
            let p = dot(&v, row) * T::of(2.0);
            for (x, &vi) in row.iter_mut().zip(&v) {
                *x -= p * vi;
            }
        }
        reflectors.push(v);
    }

    // Q = H_0 H_1 ... H_{n-1} applied to the first n columns of I.
    let mut qt = DenseMatrix::<T>::zeros(n, m);
    for c in 0..n {
        qt[(c, c)] = T::one();
    }
    for (j, v) in reflectors.iter().enumerate().rev() {
        for c in 0..n {
            let row = &mut qt.row_mut(c)[j..];
            let p = dot(v, row) * T::of(2.0);
            for (x, &vi) in row.iter_mut().zip(v) {
                *x -= p * vi;
            }
        }
    }
    Ok(qt.transpose())
}

/// Thin singular value decomposition `A = U·diag(s)·Vᵀ`.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    pub u: DenseMatrix<T>,
    pub s: DenseVector<T>,
    pub v: DenseMatrix<T>,
}

const MAX_SWEEPS: usize = 80;

/// One-sided Jacobi SVD. Singular values come back sorted descending; `U`
/// and `V` have `min(m, n)` orthonormal columns.
pub fn svd<T: Scalar>(a: &DenseMatrix<T>) -> Result<Svd<T>> {
    if !a.is_finite() {
        return Err(Error::Precondition("svd input has non-finite entries".into()));
    }
    let (m, n) = a.shape();
    if m < n {
        let t = svd(&a.transpose())?;
        return Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    // Columns of the working matrix stored as rows.
    let mut w = a.transpose();
    let mut vt = DenseMatrix::<T>::identity(n);
    let eps = T::epsilon();
    let mut converged = n < 2;
    let mut off = T::zero();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let wp = w.row(p);
                    let wq = w.row(q);
                    (dot(wp, wp), dot(wq, wq), dot(wp, wq))
                };
                if gamma == T::zero() {
                    continue;
                }
                let denom = (alpha * beta).sqrt();
                let rel = gamma.abs() / denom;
                if !(rel > eps) {
                    continue;
                }
                off = off.max(rel);
                rotated = true;
                let zeta = (beta - alpha) / (T::of(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut w, p, q, c, s);
                rotate_rows(&mut vt, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical {
            context: format!("jacobi svd did not converge in {MAX_SWEEPS} sweeps"),
            residual: off.as_f64(),
        });
    }

    let norms: Vec<T> = (0..n).map(|j| norm2(w.row(j))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));

    let s_max = norms.get(order[0]).copied().unwrap_or_else(T::zero);
    let cutoff = s_max * eps * T::of(m as f64);
    let mut ut = DenseMatrix::<T>::zeros(n, m);
    let mut v_sorted = DenseMatrix::<T>::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        let sj = norms[j];
        if sj > cutoff && sj > T::zero() {
            let inv = T::one() / sj;
            for (dst, &src) in ut.row_mut(k).iter_mut().zip(w.row(j)) {
                *dst = src * inv;
            }
            s.push(sj);
        } else {
            s.push(T::zero());
            deficient.push(k);
        }
        v_sorted.set_column(k, vt.row(j));
    }
    complete_orthonormal_rows(&mut ut, &deficient);

    Ok(Svd {
        u: ut.transpose(),
        s: DenseVector::from_vec(s),
        v: v_sorted,
    })
}

fn rotate_rows<T: Scalar>(m: &mut DenseMatrix<T>, p: usize, q: usize, c: T, s: T) {
    let cols = m.cols();
    let data = m.as_mut_slice();
    let (lo, hi) = data.split_at_mut(q * cols);
    let rp = &mut lo[p * cols..(p + 1) * cols];
    let rq = &mut hi[..cols];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let a = *x;
        let b = *y;
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Replaces the listed rows with unit vectors orthogonal to every other row.
fn complete_orthonormal_rows<T: Scalar>(m: &mut DenseMatrix<T>, targets: &[usize]) {
    if targets.is_empty() {
        return;
    }
    let dim = m.cols();
    let mut filled: Vec<bool> = (0..m.rows()).map(|r| !targets.contains(&r)).collect();
    let mut candidate = 0usize;
    for &t in targets {
        loop {
            assert!(candidate < dim, "cannot complete orthonormal basis");
            let mut e = vec![T::zero(); dim];
            e[candidate] = T::one();
            candidate += 1;
            // Two rounds of Gram-Schmidt for stability.
            for _ in 0..2 {
                for r in 0..m.rows() {
                    if filled[r] {
                        let p = dot(m.row(r), &e);
                        for (x, &b) in e.iter_mut().zip(m.row(r)) {
                            *x -= p * b;
                        }
                    }
                }
            }
            let nrm = norm2(&e);
            if nrm > T::of(1e-6) {
                for (dst, &x) in m.row_mut(t).iter_mut().zip(&e) {
                    *dst = x / nrm;
                }
                filled[t] = true;
                break;
            }
        }
    }
}

/// Result of a power-iteration spectral norm estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralNorm<T> {
    pub value: T,
    pub iterations: usize,
    pub converged: bool,
}

pub const POWER_TOL: f64 = 1e-9;
pub const POWER_MAX_ITER: usize = 1000;

/// Largest singular value by power iteration on `AᵀA`, started from the
/// normalized all-ones vector.
pub fn spectral_norm_estimate<T: Scalar>(a: &DenseMatrix<T>, tol: T, max_iter: usize) -> Result<SpectralNorm<T>> {
    if !(tol > T::zero()) {
        return Err(Error::Precondition("spectral_norm tolerance must be positive".into()));
    }
    if !a.is_finite() {
        return Err(Error::Precondition("spectral_norm input has non-finite entries".into()));
    }
    let n = a.cols();
    if n == 0 || a.max_abs() == T::zero() {
        return Ok(SpectralNorm {
            value: T::zero(),
            iterations: 0,
            converged: true,
        });
    }
    let mut v = vec![T::one() / T::of(n as f64).sqrt(); n];
    let mut av = a.mul_vec(&v)?;
    if norm2(&av) == T::zero() {
        // All-ones start lies in the null space; restart from the heaviest column.
        let norms = a.column_norms();
        let j = (0..n)
            .max_by(|&i, &k| norms[i].partial_cmp(&norms[k]).expect("finite"))
            .expect("n > 0");
        v = vec![T::zero(); n];
        v[j] = T::one();
        av = a.mul_vec(&v)?;
    }
    let mut sigma = norm2(&av);
    for it in 1..=max_iter {
        let mut w = a.tr_mul_vec(&av)?;
        let wn = norm2(&w);
        if wn == T::zero() {
            return Ok(SpectralNorm {
                value: sigma,
                iterations: it,
                converged: true,
            });
        }
        w.iter_mut().for_each(|x| *x /= wn);
        v = w;
        av = a.mul_vec(&v)?;
        let next = norm2(&av);
        let done = (next - sigma).abs() <= tol * next;
        sigma = next;
        if done {
            return Ok(SpectralNorm {
                value: sigma,
                iterations: it,
                converged: true,
            });
        }
    }
    Ok(SpectralNorm {
        value: sigma,
        iterations: max_iter,
        converged: false,
    })
}

/// Spectral norm with the default tolerance and iteration cap.
pub fn spectral_norm<T: Scalar>(a: &DenseMatrix<T>) -> T {
    spectral_norm_estimate(a, T::of(POWER_TOL), POWER_MAX_ITER)
        .map(|e| e.value)
        .unwrap_or_else(|_| T::nan())
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky<T: Scalar>(a: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::shape("cholesky", a.shape(), (n, n)));
    }
    let mut l = DenseMatrix::<T>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) {
            return Err(Error::Numerical {
                context: format!("cholesky: matrix not positive definite at pivot {j}"),
                residual: d.as_f64(),
            });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `L·Lᵀ·X = B` given the Cholesky factor `L`.
pub fn cholesky_solve<T: Scalar>(l: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let n = l.rows();
    if b.rows() != n {
        return Err(Error::shape("cholesky_solve", l.shape(), b.shape()));
    }
    let mut x = b.clone();
    for c in 0..b.cols() {
        // forward: L y = b
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}
