use serde::{Deserialize, Serialize};

use super::Activation;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::{seeded, uniform_matrix, uniform_vec, Rng};
use crate::scalar::Scalar;
use crate::shaping::{ShapingOperator, ShapingSpec};

/// Dense layer `act(W·x + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpLayer<T> {
    pub weight: DenseMatrix<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

/// Structured-corrective block: `S·(W·x) + b + α·act(B·x + c)`.
///
/// The sum is returned as is; all nonlinearity lives in the correction path.
#[derive(Clone, Debug, PartialEq)]
pub struct PgnnBlock<T> {
    pub shaping: ShapingOperator<T>,
    pub weight: DenseMatrix<T>,
    pub bias: Vec<T>,
    pub correction_weight: DenseMatrix<T>,
    pub correction_bias: Vec<T>,
    pub correction_activation: Activation,
    pub correction_scale: T,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Mlp(MlpLayer<T>),
    Pgnn(PgnnBlock<T>),
}

/// Hidden layer stack followed by a linear head producing logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub layers: Vec<Layer<T>>,
    pub head: MlpLayer<T>,
}

impl<T: Scalar> MlpLayer<T> {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weight.rows() * self.weight.cols() + self.bias.len()
    }
}

impl<T: Scalar> PgnnBlock<T> {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    /// Trainable parameters; `S` is fixed and not counted.
    pub fn param_count(&self) -> usize {
        let (o, i) = self.weight.shape();
        2 * (o * i + o)
    }

    /// `S·W`, the structured linear map.
    pub fn structured_matrix(&self) -> DenseMatrix<T> {
        self.shaping.apply(&self.weight).expect("validated dims")
    }
}

impl<T: Scalar> Layer<T> {
    pub fn in_dim(&self) -> usize {
        match self {
            Layer::Mlp(l) => l.in_dim(),
            Layer::Pgnn(l) => l.in_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Layer::Mlp(l) => l.out_dim(),
            Layer::Pgnn(l) => l.out_dim(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Mlp(l) => l.param_count(),
            Layer::Pgnn(l) => l.param_count(),
        }
    }

    pub fn is_pgnn(&self) -> bool {
        matches!(self, Layer::Pgnn(_))
    }
}

impl<T: Scalar> Network<T> {
    /// Checks that dimensions chain and the head is linear.
    pub fn new(layers: Vec<Layer<T>>, head: MlpLayer<T>) -> Result<Self> {
        let net = Self { layers, head };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev: Option<usize> = None;
        for (i, layer) in self.layers.iter().enumerate() {
            if let Some(p) = prev {
                if layer.in_dim() != p {
                    return Err(Error::shape("layer chain", (p, 1), (layer.in_dim(), i)));
                }
            }
            match layer {
                Layer::Mlp(l) => {
                    if l.bias.len() != l.out_dim() {
                        return Err(Error::shape("mlp bias", l.weight.shape(), (l.bias.len(), 1)));
                    }
                }
                Layer::Pgnn(l) => {
                    if l.shaping.dim() != l.out_dim() {
                        return Err(Error::shape("shaping dim", (l.shaping.dim(), l.shaping.dim()), l.weight.shape()));
                    }
                    if l.correction_weight.shape() != l.weight.shape()
                        || l.bias.len() != l.out_dim()
                        || l.correction_bias.len() != l.out_dim()
                    {
                        return Err(Error::shape("pgnn params", l.weight.shape(), l.correction_weight.shape()));
                    }
                }
            }
            prev = Some(layer.out_dim());
        }
        if let Some(p) = prev {
            if self.head.in_dim() != p {
                return Err(Error::shape("head", (p, 1), self.head.weight.shape()));
            }
        }
        if self.head.bias.len() != self.head.out_dim() {
            return Err(Error::shape("head bias", self.head.weight.shape(), (self.head.bias.len(), 1)));
        }
        if self.head.activation != Activation::Identity {
            return Err(Error::Precondition("network head must be linear (activation none)".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or_else(|| self.head.in_dim(), Layer::in_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.head.out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum::<usize>() + self.head.param_count()
    }

    pub fn has_pgnn(&self) -> bool {
        self.layers.iter().any(Layer::is_pgnn)
    }

    /// Flat views of every trainable tensor in a fixed order:
    /// per layer `W, b` (then `B, c` for structured blocks), head last.
    pub fn parameters(&self) -> Vec<(String, &[T])> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Mlp(l) => {
                    out.push((format!("layer{i}.weight"), l.weight.as_slice()));
                    out.push((format!("layer{i}.bias"), &l.bias[..]));
                }
                Layer::Pgnn(l) => {
                    out.push((format!("layer{i}.weight"), l.weight.as_slice()));
                    out.push((format!("layer{i}.bias"), &l.bias[..]));
                    out.push((format!("layer{i}.correction_weight"), l.correction_weight.as_slice()));
                    out.push((format!("layer{i}.correction_bias"), &l.correction_bias[..]));
                }
            }
        }
        out.push(("head.weight".into(), self.head.weight.as_slice()));
        out.push(("head.bias".into(), &self.head.bias[..]));
        out
    }

    /// Mutable counterpart of [`parameters`](Self::parameters), same order.
    pub fn parameters_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for layer in self.layers.iter_mut() {
            match layer {
                Layer::Mlp(l) => {
                    out.push(l.weight.as_mut_slice());
                    out.push(&mut l.bias[..]);
                }
                Layer::Pgnn(l) => {
                    out.push(l.weight.as_mut_slice());
                    out.push(&mut l.bias[..]);
                    out.push(l.correction_weight.as_mut_slice());
                    out.push(&mut l.correction_bias[..]);
                }
            }
        }
        out.push(self.head.weight.as_mut_slice());
        out.push(&mut self.head.bias[..]);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().iter().all(|(_, p)| p.iter().all(|x| x.is_finite()))
    }
}

/// Hidden-block architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BlockSpec {
    Mlp {
        #[serde(default = "relu")]
        activation: Activation,
    },
    Pgnn {
        #[serde(default = "identity_shaping")]
        shaping: ShapingSpec,
        #[serde(default = "relu")]
        correction_activation: Activation,
        #[serde(default = "unit")]
        correction_scale: f64,
    },
}

fn relu() -> Activation {
    Activation::Relu
}

fn identity_shaping() -> ShapingSpec {
    ShapingSpec::Identity
}

fn unit() -> f64 {
    1.0
}

impl BlockSpec {
    pub fn is_pgnn(&self) -> bool {
        matches!(self, BlockSpec::Pgnn { .. })
    }
}

/// Full architecture description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub block: BlockSpec,
}

impl NetworkSpec {
    /// Trainable parameter count without building the network.
    pub fn param_count(&self) -> usize {
        let per_layer = if self.block.is_pgnn() { 2 } else { 1 };
        let mut prev = self.input_dim;
        let mut total = 0;
        for &h in &self.hidden {
            total += per_layer * (prev * h + h);
            prev = h;
        }
        total + prev * self.output_dim + self.output_dim
    }

    /// MLP spec with the same depth whose uniform hidden width gives the
    /// parameter count closest to `target`.
    pub fn budget_matched_mlp(input_dim: usize, depth: usize, output_dim: usize, target: usize, activation: Activation) -> Self {
        let make = |w: usize| NetworkSpec {
            input_dim,
            hidden: vec![w; depth],
            output_dim,
            block: BlockSpec::Mlp { activation },
        };
        let mut best = make(1);
        let mut best_gap = best.param_count().abs_diff(target);
        let mut w = 1;
        loop {
            w += 1;
            let cand = make(w);
            let count = cand.param_count();
            let gap = count.abs_diff(target);
            if gap < best_gap {
                best = cand;
                best_gap = gap;
            }
            if count > target {
                break;
            }
        }
        best
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Entries i.i.d. uniform on `±1/√fan_in` (weights and biases alike).
    UniformFanIn,
    /// All parameters zero.
    Zero,
}

fn dense<T: Scalar>(rng: &mut Rng, out: usize, inp: usize, scheme: InitScheme) -> (DenseMatrix<T>, Vec<T>) {
    match scheme {
        InitScheme::UniformFanIn => {
            let bound = 1.0 / (inp as f64).sqrt();
            (uniform_matrix(rng, out, inp, bound), uniform_vec(rng, out, bound))
        }
        InitScheme::Zero => (DenseMatrix::zeros(out, inp), vec![T::zero(); out]),
    }
}

/// Builds and initializes a network from its spec; deterministic per seed.
pub fn init_params<T: Scalar>(spec: &NetworkSpec, seed: u64, scheme: InitScheme) -> Result<Network<T>> {
    if spec.input_dim == 0 || spec.output_dim == 0 || spec.hidden.contains(&0) {
        return Err(Error::Precondition("network dimensions must be positive".into()));
    }
    let mut rng = seeded(seed);
    let mut layers = Vec::with_capacity(spec.hidden.len());
    let mut prev = spec.input_dim;
    for &h in &spec.hidden {
        let layer = match &spec.block {
            BlockSpec::Mlp { activation } => {
                let (weight, bias) = dense(&mut rng, h, prev, scheme);
                Layer::Mlp(MlpLayer {
                    weight,
                    bias,
                    activation: *activation,
                })
            }
            BlockSpec::Pgnn {
                shaping,
                correction_activation,
                correction_scale,
            } => {
                let (weight, bias) = dense(&mut rng, h, prev, scheme);
                let (correction_weight, correction_bias) = dense(&mut rng, h, prev, scheme);
                Layer::Pgnn(PgnnBlock {
                    shaping: shaping.build(h)?,
                    weight,
                    bias,
                    correction_weight,
                    correction_bias,
                    correction_activation: *correction_activation,
                    correction_scale: T::of(*correction_scale),
                })
            }
        };
        layers.push(layer);
        prev = h;
    }
    let (weight, bias) = dense(&mut rng, spec.output_dim, prev, scheme);
    Network::new(
        layers,
        MlpLayer {
            weight,
            bias,
            activation: Activation::Identity,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pgnn_spec(input: usize, hidden: Vec<usize>, out: usize) -> NetworkSpec {
        NetworkSpec {
            input_dim: input,
            hidden,
            output_dim: out,
            block: BlockSpec::Pgnn {
                shaping: ShapingSpec::Identity,
                correction_activation: Activation::Relu,
                correction_scale: 1.0,
            },
        }
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let spec = pgnn_spec(5, vec![4, 3], 2);
        let a: Network<f64> = init_params(&spec, 7, InitScheme::UniformFanIn).unwrap();
        let b: Network<f64> = init_params(&spec, 7, InitScheme::UniformFanIn).unwrap();
        let c: Network<f64> = init_params(&spec, 8, InitScheme::UniformFanIn).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_uniform_std_matches_fan_in() {
        let spec = NetworkSpec {
            input_dim: 784,
            hidden: vec![256],
            output_dim: 10,
            block: BlockSpec::Mlp {
                activation: Activation::Relu,
            },
        };
        let net: Network<f64> = init_params(&spec, 1, InitScheme::UniformFanIn).unwrap();
        let w = match &net.layers[0] {
            Layer::Mlp(l) => l.weight.as_slice().to_vec(),
            _ => unreachable!(),
        };
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let std = (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        // uniform on ±a has std a/√3 = (2a)/√12
        let expected = (2.0 / 784f64.sqrt()) / 12f64.sqrt();
        assert!((std / expected - 1.0).abs() < 0.05, "{std} vs {expected}");
        let bound = 1.0 / 784f64.sqrt();
        assert!(w.iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn param_count_matches_built_network() {
        for spec in [
            pgnn_spec(16, vec![64, 64], 4),
            NetworkSpec {
                input_dim: 16,
                hidden: vec![93, 93],
                output_dim: 4,
                block: BlockSpec::Mlp {
                    activation: Activation::Relu,
                },
            },
        ] {
            let net: Network<f64> = init_params(&spec, 0, InitScheme::UniformFanIn).unwrap();
            assert_eq!(net.param_count(), spec.param_count());
            let flat: usize = net.parameters().iter().map(|(_, p)| p.len()).sum();
            assert_eq!(flat, spec.param_count());
        }
    }

    #[test]
    fn budget_matching_within_two_percent() {
        for (input, width, out) in [(16, 64, 4), (784, 128, 10), (16, 64, 2), (16, 16, 4)] {
            let pgnn = pgnn_spec(input, vec![width, width], out);
            let target = pgnn.param_count();
            let mlp = NetworkSpec::budget_matched_mlp(input, 2, out, target, Activation::Relu);
            let gap = mlp.param_count().abs_diff(target) as f64 / target as f64;
            assert!(gap <= 0.02, "{input}/{width}: {gap}");
            assert!(mlp.hidden[0] > width);
        }
    }

    #[test]
    fn rejects_broken_chain_and_nonlinear_head() {
        let mut net: Network<f64> = init_params(&pgnn_spec(3, vec![4], 2), 0, InitScheme::UniformFanIn).unwrap();
        net.head.activation = Activation::Relu;
        assert!(net.validate().is_err());
        net.head.activation = Activation::Identity;
        net.head.weight = DenseMatrix::zeros(2, 5);
        assert!(net.validate().is_err());
    }
}
