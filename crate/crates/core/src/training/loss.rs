use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

/// Mean over all entries of `(pred − target)²`, with its gradient.
pub fn mse_loss<T: Scalar>(pred: &DenseMatrix<T>, target: &DenseMatrix<T>) -> Result<(T, DenseMatrix<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("mse_loss", pred.shape(), target.shape()));
    }
    let count = T::of(pred.as_slice().len().max(1) as f64);
    let diff = pred.sub(target)?;
    let loss = diff.as_slice().iter().map(|&d| d * d).sum::<T>() / count;
    let two = T::of(2.0);
    Ok((loss, diff.map(|d| two * d / count)))
}

/// Mean negative log-likelihood of `labels` under softmax of the logit
/// columns (`classes×batch`), computed via a max-shifted log-sum-exp.
pub fn cross_entropy_loss<T: Scalar>(logits: &DenseMatrix<T>, labels: &[usize]) -> Result<(T, DenseMatrix<T>)> {
    let (classes, batch) = logits.shape();
    if labels.len() != batch {
        return Err(Error::shape("cross_entropy_loss", logits.shape(), (labels.len(), 1)));
    }
    if let Some((i, &bad)) = labels.iter().enumerate().find(|(_, &y)| y >= classes) {
        return Err(Error::Precondition(format!(
            "label {bad} at sample {i} outside 0..{classes}"
        )));
    }
    let nb = T::of(batch.max(1) as f64);
    let mut grad = DenseMatrix::zeros(classes, batch);
    let mut total = T::zero();
    for (j, &y) in labels.iter().enumerate() {
        let mut m = T::neg_infinity();
        for k in 0..classes {
            m = m.max(logits[(k, j)]);
        }
        let mut z = T::zero();
        for k in 0..classes {
            z += (logits[(k, j)] - m).exp();
        }
        let lse = m + z.ln();
        total += lse - logits[(y, j)];
        for k in 0..classes {
            let p = (logits[(k, j)] - lse).exp();
            let onehot = if k == y { T::one() } else { T::zero() };
            grad[(k, j)] = (p - onehot) / nb;
        }
    }
    Ok((total / nb, grad))
}

/// Fraction of columns whose arg-max logit equals the label.
pub fn accuracy<T: Scalar>(logits: &DenseMatrix<T>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(j, &y)| argmax_column(logits, j) == y)
        .count();
    hits as f64 / labels.len() as f64
}

pub fn argmax_column<T: Scalar>(m: &DenseMatrix<T>, j: usize) -> usize {
    let mut best = 0;
    for k in 1..m.rows() {
        if m[(k, j)] > m[(best, j)] {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, seeded};
    use crate::Matrix;

    #[test]
    fn mse_examples() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(mse_loss(&a, &a).unwrap().0, 0.0);
        let b = a.map(|x| x - 1.0);
        assert_eq!(mse_loss(&a, &b).unwrap().0, 1.0);
        assert!(mse_loss(&a, &Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn mse_gradient_matches_finite_differences() {
        let mut rng = seeded(1);
        let p: Matrix = gaussian_matrix(&mut rng, 3, 4);
        let t: Matrix = gaussian_matrix(&mut rng, 3, 4);
        let (_, g) = mse_loss(&p, &t).unwrap();
        let h = 1e-6;
        for idx in 0..12 {
            let mut up = p.clone();
            up.as_mut_slice()[idx] += h;
            let mut dn = p.clone();
            dn.as_mut_slice()[idx] -= h;
            let fd = (mse_loss(&up, &t).unwrap().0 - mse_loss(&dn, &t).unwrap().0) / (2.0 * h);
            assert!((fd - g.as_slice()[idx]).abs() <= 1e-8);
        }
    }

    #[test]
    fn cross_entropy_examples() {
        let logits = Matrix::zeros(5, 3);
        let (l, _) = cross_entropy_loss(&logits, &[0, 3, 4]).unwrap();
        assert!((l - 5f64.ln()).abs() < 1e-15);
        let mut confident = Matrix::zeros(4, 1);
        confident[(2, 0)] = 50.0;
        let (l, _) = cross_entropy_loss(&confident, &[2]).unwrap();
        assert!((0.0..1e-20).contains(&l));
        assert!(cross_entropy_loss(&logits, &[0, 5, 1]).is_err());
        // huge logits stay finite
        let big = Matrix::from_rows(&[vec![1000.0], vec![-1000.0]]);
        let (l, g) = cross_entropy_loss(&big, &[1]).unwrap();
        assert!((l - 2000.0).abs() < 1e-9 && g.is_finite());
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = seeded(2);
        let z: Matrix = gaussian_matrix(&mut rng, 4, 5);
        let labels = [0, 3, 1, 1, 2];
        let (_, g) = cross_entropy_loss(&z, &labels).unwrap();
        let h = 1e-5;
        for idx in 0..20 {
            let mut up = z.clone();
            up.as_mut_slice()[idx] += h;
            let mut dn = z.clone();
            dn.as_mut_slice()[idx] -= h;
            let fd = (cross_entropy_loss(&up, &labels).unwrap().0 - cross_entropy_loss(&dn, &labels).unwrap().0) / (2.0 * h);
            assert!((fd - g.as_slice()[idx]).abs() <= 1e-6);
        }
    }

    #[test]
    fn accuracy_counts_argmax_hits() {
        let z = Matrix::from_rows(&[vec![1.0, 0.0, 0.2], vec![0.0, 1.0, 0.1]]);
        assert_eq!(accuracy(&z, &[0, 1, 1]), 2.0 / 3.0);
    }
}
