use super::{Layer, Network};
use crate::error::{Error, Result};
use crate::linalg::{gemm, matmul, svd, DenseMatrix, Op};
use crate::scalar::Scalar;

/// Intermediate values of one hidden layer for a batch (columns are samples).
#[derive(Clone, Debug)]
pub struct LayerTrace<T> {
    /// `W·x + b` for dense layers, `B·x + c` for structured blocks.
    pub pre_activation: DenseMatrix<T>,
    /// `S·W·x + b` (structured blocks only).
    pub structured: Option<DenseMatrix<T>>,
    /// `α·act(B·x + c)` (structured blocks only).
    pub correction: Option<DenseMatrix<T>>,
    pub output: DenseMatrix<T>,
}

#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    pub input: DenseMatrix<T>,
    pub layers: Vec<LayerTrace<T>>,
    pub logits: DenseMatrix<T>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn batch_size(&self) -> usize {
        self.input.cols()
    }

    /// Input seen by hidden layer `l` (or by the head when `l == layers.len()`).
    pub fn layer_input(&self, l: usize) -> &DenseMatrix<T> {
        if l == 0 {
            &self.input
        } else {
            &self.layers[l - 1].output
        }
    }

    /// Hidden activations of layer `l` with samples as rows (`batch×width`).
    pub fn activations(&self, l: usize) -> DenseMatrix<T> {
        self.layers[l].output.transpose()
    }
}

/// Gradient of one layer's parameters, laid out like the layer itself.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad<T> {
    pub weight: DenseMatrix<T>,
    pub bias: Vec<T>,
    /// `(B, c)` gradients for structured blocks.
    pub correction: Option<(DenseMatrix<T>, Vec<T>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerGrad<T>>,
    pub head: LayerGrad<T>,
    /// `input_grads[l]` is ∂loss/∂(input of hidden layer l); empty when not requested.
    pub input_grads: Vec<DenseMatrix<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// Flat gradient tensors in the same order as [`Network::parameters`].
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for g in self.layers.iter().chain(std::iter::once(&self.head)) {
            out.push(g.weight.as_slice());
            out.push(&g.bias[..]);
            if let Some((w, b)) = &g.correction {
                out.push(w.as_slice());
                out.push(&b[..]);
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for g in self.layers.iter_mut().chain(std::iter::once(&mut self.head)) {
            out.push(g.weight.as_mut_slice());
            out.push(&mut g.bias[..]);
            if let Some((w, b)) = &mut g.correction {
                out.push(w.as_mut_slice());
                out.push(&mut b[..]);
            }
        }
        out
    }
}

fn affine<T: Scalar>(w: &DenseMatrix<T>, x: &DenseMatrix<T>, b: &[T]) -> Result<DenseMatrix<T>> {
    let mut out = matmul(w, x)?;
    out.add_column_vector(b);
    Ok(out)
}

fn check_finite<T: Scalar>(m: &DenseMatrix<T>, layer: &str) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical {
            context: format!("non-finite activation in {layer}"),
            residual: f64::NAN,
        })
    }
}

impl<T: Scalar> Network<T> {
    /// Runs a batch (`d_in×batch`) through the network, recording every
    /// intermediate needed by `backward` and the diagnostics.
    pub fn forward(&self, x: &DenseMatrix<T>) -> Result<ForwardTrace<T>> {
        if x.rows() != self.input_dim() {
            return Err(Error::shape("forward input", (self.input_dim(), x.cols()), x.shape()));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let input = layers.last().map_or(x, |t: &LayerTrace<T>| &t.output);
            let trace = match layer {
                Layer::Mlp(l) => {
                    let pre = affine(&l.weight, input, &l.bias)?;
                    let output = l.activation.map(&pre);
                    LayerTrace {
                        pre_activation: pre,
                        structured: None,
                        correction: None,
                        output,
                    }
                }
                Layer::Pgnn(l) => {
                    let wx = matmul(&l.weight, input)?;
                    let mut structured = l.shaping.apply(&wx)?;
                    structured.add_column_vector(&l.bias);
                    let pre = affine(&l.correction_weight, input, &l.correction_bias)?;
                    let alpha = l.correction_scale;
                    let act = l.correction_activation;
                    let correction = pre.map(|v| alpha * act.apply(v));
                    let output = structured.add(&correction)?;
                    LayerTrace {
                        pre_activation: pre,
                        structured: Some(structured),
                        correction: Some(correction),
                        output,
                    }
                }
            };
            check_finite(&trace.output, &format!("layer{i}"))?;
            layers.push(trace);
        }
        let last = layers.last().map_or(x, |t| &t.output);
        let logits = affine(&self.head.weight, last, &self.head.bias)?;
        check_finite(&logits, "head")?;
        Ok(ForwardTrace {
            input: x.clone(),
            layers,
            logits,
        })
    }

    /// Exact reverse-mode gradients of a scalar loss given `∂loss/∂logits`.
    pub fn backward(&self, trace: &ForwardTrace<T>, d_logits: &DenseMatrix<T>) -> Result<Gradients<T>> {
        self.backward_impl(trace, d_logits, true)
    }

    /// Like [`backward`](Self::backward) but skips input gradients that no
    /// parameter depends on (the first layer's input).
    pub fn backward_params(&self, trace: &ForwardTrace<T>, d_logits: &DenseMatrix<T>) -> Result<Gradients<T>> {
        self.backward_impl(trace, d_logits, false)
    }

    fn backward_impl(&self, trace: &ForwardTrace<T>, d_logits: &DenseMatrix<T>, all_inputs: bool) -> Result<Gradients<T>> {
        if trace.layers.len() != self.layers.len() || trace.input.rows() != self.input_dim() {
            return Err(Error::Precondition("trace does not belong to this network".into()));
        }
        if d_logits.shape() != trace.logits.shape() {
            return Err(Error::shape("backward dLogits", trace.logits.shape(), d_logits.shape()));
        }
        let n_layers = self.layers.len();
        let head_in = trace.layer_input(n_layers);
        let head = LayerGrad {
            weight: crate::linalg::matmul_nt(d_logits, head_in)?,
            bias: d_logits.row_sums(),
            correction: None,
        };
        let mut grad = if n_layers > 0 || all_inputs {
            crate::linalg::matmul_tn(&self.head.weight, d_logits)?
        } else {
            DenseMatrix::zeros(0, 0)
        };

        let mut layer_grads: Vec<LayerGrad<T>> = Vec::with_capacity(n_layers);
        let mut input_grads: Vec<DenseMatrix<T>> = Vec::with_capacity(n_layers);
        for l in (0..n_layers).rev() {
            let x = trace.layer_input(l);
            let lt = &trace.layers[l];
            let need_input = l > 0 || all_inputs;
            match &self.layers[l] {
                Layer::Mlp(layer) => {
                    let act = layer.activation;
                    let mut g_pre = grad.clone();
                    if act != super::Activation::Identity {
                        for (g, &p) in g_pre.as_mut_slice().iter_mut().zip(lt.pre_activation.as_slice()) {
                            *g *= act.derivative(p);
                        }
                    }
                    let weight = crate::linalg::matmul_nt(&g_pre, x)?;
                    let bias = g_pre.row_sums();
                    let next = if need_input {
                        crate::linalg::matmul_tn(&layer.weight, &g_pre)?
                    } else {
                        DenseMatrix::zeros(0, 0)
                    };
                    layer_grads.push(LayerGrad {
                        weight,
                        bias,
                        correction: None,
                    });
                    grad = next;
                }
                Layer::Pgnn(layer) => {
                    // structured path: out = S(Wx) + b
                    let bias = grad.row_sums();
                    let g_wx = layer.shaping.apply_transpose(&grad)?;
                    let weight = crate::linalg::matmul_nt(&g_wx, x)?;
                    // correction path: out += α act(Bx + c)
                    let alpha = layer.correction_scale;
                    let act = layer.correction_activation;
                    let mut g_c = grad.clone();
                    for (g, &p) in g_c.as_mut_slice().iter_mut().zip(lt.pre_activation.as_slice()) {
                        *g *= alpha * act.derivative(p);
                    }
                    let cw = crate::linalg::matmul_nt(&g_c, x)?;
                    let cb = g_c.row_sums();
                    let next = if need_input {
                        let mut gi = crate::linalg::matmul_tn(&layer.weight, &g_wx)?;
                        gemm(T::one(), &layer.correction_weight, Op::T, &g_c, Op::N, T::one(), &mut gi)?;
                        gi
                    } else {
                        DenseMatrix::zeros(0, 0)
                    };
                    layer_grads.push(LayerGrad {
                        weight,
                        bias,
                        correction: Some((cw, cb)),
                    });
                    grad = next;
                }
            }
            if need_input {
                input_grads.push(grad.clone());
            }
        }
        layer_grads.reverse();
        input_grads.reverse();
        if !all_inputs {
            input_grads.clear();
        }
        Ok(Gradients {
            layers: layer_grads,
            head,
            input_grads,
        })
    }

    /// Input→logits Jacobian (`classes×d_in`) at a single point.
    pub fn jacobian_input_to_logits(&self, x: &[T]) -> Result<DenseMatrix<T>> {
        let d = self.input_dim();
        if x.len() != d {
            return Err(Error::shape("jacobian input", (d, 1), (x.len(), 1)));
        }
        let c = self.output_dim();
        // One column per logit; seeding the backward pass with I_c yields every row at once.
        let batch = DenseMatrix::from_fn(d, c, |i, _| x[i]);
        let trace = self.forward(&batch)?;
        let seed = DenseMatrix::identity(c);
        let grads = self.backward(&trace, &seed)?;
        let gi = match grads.input_grads.first() {
            Some(g) => g.clone(),
            // no hidden layers: the Jacobian is the head weight
            None => return Ok(self.head.weight.clone()),
        };
        Ok(gi.transpose())
    }

    /// Singular values of the input→logits Jacobian at `x`, descending.
    pub fn jacobian_spectrum(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(svd(&self.jacobian_input_to_logits(x)?)?.s.into_vec())
    }
}

/// Batch-mean L2 norms of the two paths of one structured block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathwayMagnitude<T> {
    pub layer: usize,
    pub structured: T,
    pub correction: T,
}

fn mean<T: Scalar>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / T::of(v.len().max(1) as f64)
}

/// Per structured block, batch-mean norms of `S·W·x + b` and of the correction output.
pub fn pathway_magnitudes<T: Scalar>(trace: &ForwardTrace<T>) -> Result<Vec<PathwayMagnitude<T>>> {
    let out: Vec<_> = trace
        .layers
        .iter()
        .enumerate()
        .filter_map(|(i, lt)| match (&lt.structured, &lt.correction) {
            (Some(s), Some(c)) => Some(PathwayMagnitude {
                layer: i,
                structured: mean(&s.column_norms()),
                correction: mean(&c.column_norms()),
            }),
            _ => None,
        })
        .collect();
    if out.is_empty() {
        return Err(Error::NotApplicable("pathway magnitudes need structured blocks".into()));
    }
    Ok(out)
}
