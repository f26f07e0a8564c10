use super::dataset::{Dataset, Split, Targets};
use crate::error::{Error, Result};
use crate::linalg::{matmul, matmul_tn, qr_orthonormal, DenseMatrix};
use crate::rng::{gaussian_matrix, gaussian_vec, shuffle, substream};
use crate::scalar::Scalar;

/// Variance of the per-class score noise of the linear+noise task.
pub const CLASSIFICATION_NOISE_VAR: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignmentParams {
    pub d: usize,
    pub m: usize,
    pub sigma: f64,
    pub n_train: usize,
    pub n_test: usize,
}

impl Default for AlignmentParams {
    fn default() -> Self {
        Self {
            d: 16,
            m: 4,
            sigma: 0.05,
            n_train: 8192,
            n_test: 512,
        }
    }
}

fn split_columns<T: Scalar>(m: &DenseMatrix<T>, n_train: usize) -> (DenseMatrix<T>, DenseMatrix<T>) {
    (m.columns(0, n_train), m.columns(n_train, m.cols()))
}

/// `x ~ N(0, I)`, `z = Uᵀx` for a random orthonormal `U`, `y = V·z + ε`
/// with `V_ij ~ N(0, 1/d)` and `ε ~ N(0, σ²)`.
pub fn gen_alignment<T: Scalar>(p: AlignmentParams, seed: u64) -> Result<Dataset<T>> {
    if p.m > p.d || p.m == 0 {
        return Err(Error::Precondition(format!("need 1 ≤ m ≤ d, got m={} d={}", p.m, p.d)));
    }
    if !(p.sigma >= 0.0) {
        return Err(Error::Precondition(format!("sigma must be ≥ 0, got {}", p.sigma)));
    }
    let n = p.n_train + p.n_test;
    let u = qr_orthonormal(&gaussian_matrix::<T>(&mut substream(seed, "basis"), p.d, p.d))?;
    let v = gaussian_matrix::<T>(&mut substream(seed, "readout"), p.m, p.d).scale(T::of(1.0 / (p.d as f64).sqrt()));
    let x = gaussian_matrix::<T>(&mut substream(seed, "inputs"), p.d, n);
    let z = matmul_tn(&u, &x)?;
    let eps = gaussian_matrix::<T>(&mut substream(seed, "target-noise"), p.m, n).scale(T::of(p.sigma));
    let y = matmul(&v, &z)?.add(&eps)?;

    let (xtr, xte) = split_columns(&x, p.n_train);
    let (ztr, zte) = split_columns(&z, p.n_train);
    let (ytr, yte) = split_columns(&y, p.n_train);
    Ok(Dataset {
        train: Split::new(xtr, Targets::Regression(ytr), Some(ztr))?,
        val: None,
        test: Split::new(xte, Targets::Regression(yte), Some(zte))?,
        basis: Some(u),
        readout: Some(v),
        signal_coords: None,
    })
}

/// `x ~ N(0, I)`, label = argmax over `w_cᵀx + noise`, `w_c ~ N(0, I)`,
/// noise `~ N(0, noise_var)`.
pub fn gen_linear_noise_classification<T: Scalar>(
    d: usize,
    classes: usize,
    n_train: usize,
    n_test: usize,
    noise_var: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    if classes < 2 {
        return Err(Error::Precondition(format!("need at least 2 classes, got {classes}")));
    }
    if !(noise_var >= 0.0) {
        return Err(Error::Precondition("noise variance must be ≥ 0".into()));
    }
    let n = n_train + n_test;
    let w = gaussian_matrix::<T>(&mut substream(seed, "class-weights"), classes, d);
    let x = gaussian_matrix::<T>(&mut substream(seed, "inputs"), d, n);
    let noise = gaussian_matrix::<T>(&mut substream(seed, "score-noise"), classes, n).scale(T::of(noise_var.sqrt()));
    let scores = matmul(&w, &x)?.add(&noise)?;
    let labels: Vec<usize> = (0..n).map(|j| crate::training::argmax_column(&scores, j)).collect();
    let (xtr, xte) = split_columns(&x, n_train);
    let targets = |r: std::ops::Range<usize>| Targets::Classes {
        labels: labels[r].to_vec(),
        num_classes: classes,
    };
    Ok(Dataset {
        train: Split::new(xtr, targets(0..n_train), None)?,
        val: None,
        test: Split::new(xte, targets(n_train..n), None)?,
        basis: None,
        readout: Some(w),
        signal_coords: None,
    })
}

/// Scalar regression whose target depends on `signal_dims` coordinates:
/// `y = aᵀs + tanh(bᵀs)` with `s` the signal coordinates. When `permuted`,
/// coordinates are shuffled by a seeded permutation, so both variants share
/// the target function.
pub fn gen_aligned_regression<T: Scalar>(
    d: usize,
    signal_dims: usize,
    permuted: bool,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<Dataset<T>> {
    if signal_dims == 0 || signal_dims > d {
        return Err(Error::Precondition(format!("need 1 ≤ signal_dims ≤ d, got {signal_dims} of {d}")));
    }
    let n = n_train + n_test;
    let k = signal_dims as f64;
    let a: Vec<T> = gaussian_vec(&mut substream(seed, "target-linear"), signal_dims, 1.0 / k.sqrt());
    let b: Vec<T> = gaussian_vec(&mut substream(seed, "target-tanh"), signal_dims, 1.0 / k.sqrt());
    let x = gaussian_matrix::<T>(&mut substream(seed, "inputs"), d, n);
    let y = DenseMatrix::from_fn(1, n, |_, j| {
        let (mut lin, mut nl) = (T::zero(), T::zero());
        for i in 0..signal_dims {
            lin += a[i] * x[(i, j)];
            nl += b[i] * x[(i, j)];
        }
        lin + nl.tanh()
    });

    let mut perm: Vec<usize> = (0..d).collect();
    if permuted {
        shuffle(&mut substream(seed, "permutation"), &mut perm);
    }
    // coordinate i of the aligned input lands at perm[i]
    let mut xp = DenseMatrix::zeros(d, n);
    for (i, &p) in perm.iter().enumerate() {
        xp.row_mut(p).copy_from_slice(x.row(i));
    }
    let (xtr, xte) = split_columns(&xp, n_train);
    let (ytr, yte) = split_columns(&y, n_train);
    Ok(Dataset {
        train: Split::new(xtr, Targets::Regression(ytr), None)?,
        val: None,
        test: Split::new(xte, Targets::Regression(yte), None)?,
        basis: None,
        readout: None,
        signal_coords: Some(perm[..signal_dims].to_vec()),
    })
}
