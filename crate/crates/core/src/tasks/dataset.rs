use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub enum Targets<T> {
    /// `m×n`, one column per sample.
    Regression(DenseMatrix<T>),
    Classes { labels: Vec<usize>, num_classes: usize },
}

impl<T: Scalar> Targets<T> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Regression(m) => m.cols(),
            Targets::Classes { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        match self {
            Targets::Regression(m) => Targets::Regression(m.select_columns(idx)),
            Targets::Classes { labels, num_classes } => Targets::Classes {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                num_classes: *num_classes,
            },
        }
    }

    /// One-hot (classification) or raw targets with samples as rows.
    pub fn as_rows(&self) -> DenseMatrix<T> {
        match self {
            Targets::Regression(m) => m.transpose(),
            Targets::Classes { labels, num_classes } => {
                let mut out = DenseMatrix::zeros(labels.len(), *num_classes);
                for (i, &y) in labels.iter().enumerate() {
                    out[(i, y)] = T::one();
                }
                out
            }
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Targets::Regression(m) => m.rows(),
            Targets::Classes { num_classes, .. } => *num_classes,
        }
    }
}

/// One split of a dataset: inputs are `d×n` (samples as columns).
#[derive(Clone, Debug, PartialEq)]
pub struct Split<T> {
    pub inputs: DenseMatrix<T>,
    pub targets: Targets<T>,
    /// Latent representation (`latent_dim×n`) where the generator has one.
    pub latents: Option<DenseMatrix<T>>,
}

impl<T: Scalar> Split<T> {
    pub fn new(inputs: DenseMatrix<T>, targets: Targets<T>, latents: Option<DenseMatrix<T>>) -> Result<Self> {
        let n = inputs.cols();
        if targets.len() != n || latents.as_ref().is_some_and(|z| z.cols() != n) {
            return Err(Error::shape("split", inputs.shape(), (targets.len(), n)));
        }
        Ok(Self {
            inputs,
            targets,
            latents,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.rows()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select_columns(idx),
            targets: self.targets.select(idx),
            latents: self.latents.as_ref().map(|z| z.select_columns(idx)),
        }
    }

    /// The first `n` samples (or all of them if fewer).
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    /// Samples `start..end` as a new split.
    pub fn range(&self, start: usize, end: usize) -> Self {
        let idx: Vec<usize> = (start..end.min(self.len())).collect();
        self.select(&idx)
    }
}

/// Train/validation/test splits plus generator-specific ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub train: Split<T>,
    pub val: Option<Split<T>>,
    pub test: Split<T>,
    /// Orthonormal basis `U` (`d×d`) of the alignment task.
    pub basis: Option<DenseMatrix<T>>,
    /// Readout `V` (`m×d`) of the alignment task.
    pub readout: Option<DenseMatrix<T>>,
    /// Coordinates the target depends on, for the aligned-regression task.
    pub signal_coords: Option<Vec<usize>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn input_dim(&self) -> usize {
        self.train.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.train.targets.output_dim()
    }
}
