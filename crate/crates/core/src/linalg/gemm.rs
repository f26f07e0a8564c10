use super::DenseMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Whether an operand enters the product as-is or transposed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    N,
    T,
}

fn op_shape<T: Scalar>(m: &DenseMatrix<T>, op: Op) -> (usize, usize) {
    match op {
        Op::N => (m.rows(), m.cols()),
        Op::T => (m.cols(), m.rows()),
    }
}

fn op_strides<T: Scalar>(m: &DenseMatrix<T>, op: Op) -> (isize, isize) {
    let c = m.cols() as isize;
    match op {
        Op::N => (c, 1),
        Op::T => (1, c),
    }
}

/// `C ← alpha·op(A)·op(B) + beta·C`.
pub fn gemm<T: Scalar>(
    alpha: T,
    a: &DenseMatrix<T>,
    op_a: Op,
    b: &DenseMatrix<T>,
    op_b: Op,
    beta: T,
    c: &mut DenseMatrix<T>,
) -> Result<()> {
    let (m, k) = op_shape(a, op_a);
    let (k2, n) = op_shape(b, op_b);
    if k != k2 {
        return Err(Error::shape("matmul", (m, k), (k2, n)));
    }
    if c.shape() != (m, n) {
        return Err(Error::shape("matmul output", c.shape(), (m, n)));
    }
    if m == 0 || n == 0 {
        return Ok(());
    }
    if k == 0 {
        if beta == T::zero() {
            c.as_mut_slice().iter_mut().for_each(|x| *x = T::zero());
        } else {
            c.scale_in_place(beta);
        }
        return Ok(());
    }
    let (rsa, csa) = op_strides(a, op_a);
    let (rsb, csb) = op_strides(b, op_b);
    let rsc = n as isize;
    // SAFETY: shapes checked above; `c` is a distinct &mut borrow so it cannot alias a or b.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_slice().as_ptr(),
            rsa,
            csa,
            b.as_slice().as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_slice().as_mut_ptr(),
            rsc,
            1,
        );
    }
    Ok(())
}

fn product<T: Scalar>(a: &DenseMatrix<T>, op_a: Op, b: &DenseMatrix<T>, op_b: Op) -> Result<DenseMatrix<T>> {
    let (m, k) = op_shape(a, op_a);
    let (k2, n) = op_shape(b, op_b);
    if k != k2 {
        return Err(Error::shape("matmul", (m, k), (k2, n)));
    }
    let mut c = DenseMatrix::zeros(m, n);
    gemm(T::one(), a, op_a, b, op_b, T::zero(), &mut c)?;
    Ok(c)
}

/// `A·B`
pub fn matmul<T: Scalar>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    product(a, Op::N, b, Op::N)
}

/// `Aᵀ·B`
pub fn matmul_tn<T: Scalar>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    product(a, Op::T, b, Op::N)
}

/// `A·Bᵀ`
pub fn matmul_nt<T: Scalar>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    product(a, Op::N, b, Op::T)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, seeded};

    fn naive(a: &DenseMatrix<f64>, b: &DenseMatrix<f64>) -> DenseMatrix<f64> {
        let mut c = DenseMatrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                c[(i, j)] = s;
            }
        }
        c
    }

    #[test]
    fn identity_and_zero() {
        let mut rng = seeded(3);
        let a: DenseMatrix<f64> = gaussian_matrix(&mut rng, 3, 4);
        assert_eq!(matmul(&DenseMatrix::identity(3), &a).unwrap(), a);
        let z = matmul(&a, &DenseMatrix::zeros(4, 2)).unwrap();
        assert_eq!(z, DenseMatrix::zeros(3, 2));
    }

    #[test]
    fn matches_triple_loop() {
        let mut rng = seeded(11);
        let a: DenseMatrix<f64> = gaussian_matrix(&mut rng, 4, 3);
        let b = gaussian_matrix(&mut rng, 3, 2);
        assert!(matmul(&a, &b).unwrap().max_abs_diff(&naive(&a, &b)) <= 1e-12);
        let c = gaussian_matrix(&mut rng, 4, 5);
        assert!(matmul_tn(&a, &c).unwrap().max_abs_diff(&naive(&a.transpose(), &c)) <= 1e-12);
        let d = gaussian_matrix(&mut rng, 6, 3);
        assert!(matmul_nt(&a, &d).unwrap().max_abs_diff(&naive(&a, &d.transpose())) <= 1e-12);
    }

    #[test]
    fn shape_error_names_both_shapes() {
        let a = DenseMatrix::<f64>::zeros(2, 3);
        let b = DenseMatrix::<f64>::zeros(2, 3);
        let err = matmul(&a, &b).unwrap_err().to_string();
        assert!(err.contains("(2, 3)"), "{err}");
    }

    #[test]
    fn empty_inner_dimension() {
        let a = DenseMatrix::<f64>::zeros(2, 0);
        let b = DenseMatrix::<f64>::zeros(0, 3);
        assert_eq!(matmul(&a, &b).unwrap(), DenseMatrix::zeros(2, 3));
    }

    #[test]
    fn f32_path() {
        let a = DenseMatrix::<f32>::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let c = matmul(&a, &a).unwrap();
        assert_eq!(c.as_slice(), &[7.0, 10.0, 15.0, 22.0]);
    }
}
