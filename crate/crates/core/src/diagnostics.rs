//! Representation and training-dynamics metrics over frozen networks and
//! activation matrices (samples as rows).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{center_columns, matmul_tn, pca_topk, svd, DenseMatrix};
use crate::network::{ForwardTrace, Gradients, Network};
use crate::scalar::Scalar;

/// Held-out batch size for the input→logits Jacobian spectrum.
pub const JACOBIAN_SAMPLES: usize = 32;
/// Principal subspace dimension for the overlap metric.
pub const SOV_K: usize = 16;
/// Samples in the held-out batch used for activation diagnostics.
pub const DIAGNOSTIC_BATCH: usize = 512;

/// Centered linear CKA between two activation sets sharing their rows.
///
/// Uses the feature-space form `‖H̃ᵀZ̃‖² / (‖H̃ᵀH̃‖·‖Z̃ᵀZ̃‖)`, which equals the
/// Gram-matrix ratio without building any `n×n` matrix.
pub fn cka_linear<T: Scalar>(h: &DenseMatrix<T>, z: &DenseMatrix<T>) -> Result<T> {
    if h.rows() != z.rows() {
        return Err(Error::shape("cka_linear", h.shape(), z.shape()));
    }
    if h.rows() < 3 {
        return Err(Error::Precondition(format!("CKA needs at least 3 samples, got {}", h.rows())));
    }
    let hc = center_columns(h)?;
    let zc = center_columns(z)?;
    let hz = matmul_tn(&hc, &zc)?.frobenius_norm();
    let hh = matmul_tn(&hc, &hc)?.frobenius_norm();
    let zz = matmul_tn(&zc, &zc)?.frobenius_norm();
    let den = hh * zz;
    if !(den > T::zero()) {
        return Err(Error::Undefined("CKA with a zero centered Gram matrix (constant features)".into()));
    }
    Ok((hz * hz / den).min(T::one()).max(T::zero()))
}

/// Mean squared cosine of the principal angles between the top-`k`
/// feature-space principal subspaces of two activation sets.
pub fn sov<T: Scalar>(h_train: &DenseMatrix<T>, h_holdout: &DenseMatrix<T>, k: usize) -> Result<T> {
    if h_train.cols() != h_holdout.cols() {
        return Err(Error::shape("sov", h_train.shape(), h_holdout.shape()));
    }
    let a = pca_topk(h_train, k)?;
    let b = pca_topk(h_holdout, k)?;
    let achieved = a.numerical_rank().min(b.numerical_rank());
    if achieved < k {
        return Err(Error::DegradedRank { requested: k, achieved });
    }
    let overlap = matmul_tn(&a.basis, &b.basis)?.frobenius_norm();
    Ok((overlap * overlap / T::of(k as f64)).min(T::one()))
}

/// Mean (over samples) of the sorted input→logits Jacobian singular values.
/// `x` holds the samples as columns and must contain exactly `samples` of them.
pub fn jacobian_spectrum_batch<T: Scalar>(net: &Network<T>, x: &DenseMatrix<T>, samples: usize) -> Result<Vec<T>> {
    if x.rows() != net.input_dim() || x.cols() != samples {
        return Err(Error::shape("jacobian_spectrum_batch", x.shape(), (net.input_dim(), samples)));
    }
    let mut acc: Vec<T> = Vec::new();
    for j in 0..samples {
        let s = net.jacobian_spectrum(&x.column(j))?;
        if acc.is_empty() {
            acc = s;
        } else {
            for (a, v) in acc.iter_mut().zip(s) {
                *a += v;
            }
        }
    }
    let n = T::of(samples.max(1) as f64);
    Ok(acc.into_iter().map(|a| a / n).collect())
}

fn unit_means<T: Scalar>(a: &DenseMatrix<T>) -> Vec<T> {
    // a is width×batch
    let n = T::of(a.cols().max(1) as f64);
    a.row_sums().into_iter().map(|s| s / n).collect()
}

/// Per hidden layer, the mean over units of the squared difference between
/// the train-batch and validation-batch mean activations.
pub fn layerwise_gap<T: Scalar>(net: &Network<T>, train_x: &DenseMatrix<T>, val_x: &DenseMatrix<T>) -> Result<Vec<T>> {
    if train_x.cols() == 0 || val_x.cols() == 0 {
        return Err(Error::Precondition("layerwise_gap needs nonempty batches".into()));
    }
    let a = net.forward(train_x)?;
    let b = net.forward(val_x)?;
    Ok(a.layers
        .iter()
        .zip(&b.layers)
        .map(|(la, lb)| {
            let (ma, mb) = (unit_means(&la.output), unit_means(&lb.output));
            let w = T::of(ma.len().max(1) as f64);
            ma.iter().zip(&mb).map(|(&p, &q)| (p - q) * (p - q)).sum::<T>() / w
        })
        .collect())
}

/// Per structured block, the batch mean of `‖c‖ / (‖s‖ + ‖c‖ + 1e-12)` where
/// `s` and `c` are a sample's structured and correction outputs.
pub fn correction_load<T: Scalar>(trace: &ForwardTrace<T>) -> Result<Vec<T>> {
    let eps = T::of(1e-12);
    let out: Vec<T> = trace
        .layers
        .iter()
        .filter_map(|lt| match (&lt.structured, &lt.correction) {
            (Some(s), Some(c)) => {
                let (sn, cn) = (s.column_norms(), c.column_norms());
                let n = T::of(sn.len().max(1) as f64);
                Some(sn.iter().zip(&cn).map(|(&a, &b)| b / (a + b + eps)).sum::<T>() / n)
            }
            _ => None,
        })
        .collect();
    if out.is_empty() {
        return Err(Error::NotApplicable("correction load needs structured blocks".into()));
    }
    Ok(out)
}

/// L2 norm of all parameter gradients concatenated.
pub fn grad_norm_total<T: Scalar>(grads: &Gradients<T>) -> T {
    grads
        .tensors()
        .iter()
        .flat_map(|t| t.iter())
        .map(|&g| g * g)
        .sum::<T>()
        .sqrt()
}

/// Ratio `σ_idx / σ_0` of a descending spectrum (0 for an all-zero one).
pub fn spectrum_tail_ratio(spectrum: &[f64], idx: usize) -> f64 {
    match (spectrum.first(), spectrum.get(idx)) {
        (Some(&top), Some(&s)) if top > 0.0 => s / top,
        _ => 0.0,
    }
}

/// Everything the harness reports for one trained network.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub cka: Vec<f64>,
    pub sov: Vec<f64>,
    pub ridge_r2: Vec<f64>,
    pub jacobian_spectrum: Vec<f64>,
    pub layerwise_gap: Vec<f64>,
    pub correction_load: Vec<f64>,
}

impl DiagnosticsReport {
    /// Checks the range invariants (1e-9 slack) and spectrum ordering.
    pub fn check(&self) -> Result<()> {
        let slack = 1e-9;
        for (name, vals) in [("cka", &self.cka), ("sov", &self.sov), ("correction_load", &self.correction_load)] {
            if let Some(v) = vals.iter().find(|v| !(-slack..=1.0 + slack).contains(*v)) {
                return Err(Error::Numerical {
                    context: format!("{name} outside [0,1]"),
                    residual: *v,
                });
            }
        }
        let s = &self.jacobian_spectrum;
        if s.iter().any(|&v| v < 0.0) || s.windows(2).any(|w| w[1] > w[0] + slack) {
            return Err(Error::Numerical {
                context: "jacobian spectrum not sorted and nonnegative".into(),
                residual: f64::NAN,
            });
        }
        Ok(())
    }
}

/// Singular values of a matrix as `f64`, descending.
pub fn singular_values<T: Scalar>(m: &DenseMatrix<T>) -> Result<Vec<f64>> {
    Ok(svd(m)?.s.as_slice().iter().map(|v| v.as_f64()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{matmul, qr_orthonormal};
    use crate::rng::{gaussian_matrix, seeded};
    use crate::Matrix;

    /// Gram-form CKA straight from the definition.
    fn cka_gram(h: &Matrix, z: &Matrix) -> f64 {
        let n = h.rows();
        let c = Matrix::from_fn(n, n, |i, j| (if i == j { 1.0 } else { 0.0 }) - 1.0 / n as f64);
        let kh = matmul(&matmul(&c, &crate::linalg::matmul_nt(h, h).unwrap()).unwrap(), &c).unwrap();
        let kz = matmul(&matmul(&c, &crate::linalg::matmul_nt(z, z).unwrap()).unwrap(), &c).unwrap();
        kh.frobenius_dot(&kz).unwrap() / (kh.frobenius_norm() * kz.frobenius_norm())
    }

    #[test]
    fn cka_matches_gram_form() {
        let mut rng = seeded(4);
        let h: Matrix = gaussian_matrix(&mut rng, 6, 2);
        let z: Matrix = gaussian_matrix(&mut rng, 6, 3);
        assert!((cka_linear(&h, &z).unwrap() - cka_gram(&h, &z)).abs() < 1e-12);
    }

    #[test]
    fn cka_invariances() {
        let mut rng = seeded(5);
        let h: Matrix = gaussian_matrix(&mut rng, 40, 5);
        let z: Matrix = gaussian_matrix(&mut rng, 40, 3);
        assert!((cka_linear(&h, &h).unwrap() - 1.0).abs() < 1e-12);
        let q = qr_orthonormal(&gaussian_matrix::<f64>(&mut rng, 5, 5)).unwrap();
        let base = cka_linear(&h, &z).unwrap();
        assert!((cka_linear(&matmul(&h, &q).unwrap(), &z).unwrap() - base).abs() < 1e-10);
        assert!((cka_linear(&h.scale(3.5), &z).unwrap() - base).abs() < 1e-10);
        assert!((cka_linear(&z, &h).unwrap() - base).abs() < 1e-12);
        assert!(cka_linear(&Matrix::filled(10, 2, 1.0), &z.columns(0, 2).select_columns(&[0])).is_err());
    }

    #[test]
    fn sov_self_and_orthogonal() {
        let mut rng = seeded(6);
        let h: Matrix = gaussian_matrix(&mut rng, 50, 8);
        assert!((sov(&h, &h, 4).unwrap() - 1.0).abs() < 1e-10);
        // disjoint coordinate supports
        let mut a = Matrix::zeros(30, 6);
        let mut b = Matrix::zeros(30, 6);
        let g: Matrix = gaussian_matrix(&mut rng, 30, 6);
        for i in 0..30 {
            for j in 0..3 {
                a[(i, j)] = g[(i, j)];
                b[(i, j + 3)] = g[(i, j + 3)];
            }
        }
        assert!(sov(&a, &b, 3).unwrap().abs() < 1e-12);
        match sov(&a, &b, 4) {
            Err(Error::DegradedRank { requested: 4, achieved: 3 }) => {}
            other => panic!("expected degraded rank, got {other:?}"),
        }
    }

    #[test]
    fn tail_ratio() {
        assert_eq!(spectrum_tail_ratio(&[4.0, 2.0, 1.0], 2), 0.25);
        assert_eq!(spectrum_tail_ratio(&[0.0, 0.0], 1), 0.0);
    }
}
