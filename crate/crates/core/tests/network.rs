use pgnn_core::linalg::{matmul, spectral_norm, svd};
use pgnn_core::network::{init_params, Activation, BlockSpec, InitScheme, Layer, Network, NetworkSpec};
use pgnn_core::rng::{gaussian_matrix, index, seeded, Rng};
use pgnn_core::shaping::ShapingSpec;
use pgnn_core::training::{cross_entropy_loss, mse_loss, LossKind};
use pgnn_core::Matrix;
use proptest::prelude::*;

const FD_EPS: f64 = 1e-5;
const FD_TOL: f64 = 1e-6;

fn spec(block: BlockSpec) -> NetworkSpec {
    NetworkSpec {
        input_dim: 5,
        hidden: vec![6, 4],
        output_dim: 3,
        block,
    }
}

fn pgnn(shaping: ShapingSpec, act: Activation) -> NetworkSpec {
    spec(BlockSpec::Pgnn {
        shaping,
        correction_activation: act,
        correction_scale: 0.9,
    })
}

fn loss(net: &Network<f64>, x: &Matrix, kind: LossKind, y: &Matrix, labels: &[usize]) -> (f64, Matrix) {
    let logits = net.forward(x).unwrap().logits;
    match kind {
        LossKind::Mse => mse_loss(&logits, y).unwrap(),
        LossKind::CrossEntropy => cross_entropy_loss(&logits, labels).unwrap(),
    }
}

/// Worst relative error over `coords` random parameter coordinates.
fn fd_check(spec: &NetworkSpec, kind: LossKind, seed: u64, coords: usize) -> f64 {
    let mut rng = seeded(seed);
    let net: Network<f64> = init_params(spec, seed, InitScheme::UniformFanIn).unwrap();
    let x: Matrix = gaussian_matrix(&mut rng, spec.input_dim, 4);
    let y: Matrix = gaussian_matrix(&mut rng, spec.output_dim, 4);
    let labels: Vec<usize> = (0..4).map(|_| index(&mut rng, spec.output_dim)).collect();

    let trace = net.forward(&x).unwrap();
    let (_, d_logits) = loss(&net, &x, kind, &y, &labels);
    let grads = net.backward_params(&trace, &d_logits).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    let sizes: Vec<usize> = analytic.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().sum();

    let mut worst = 0.0f64;
    for _ in 0..coords {
        let mut flat = index(&mut rng, total);
        let mut t = 0;
        while flat >= sizes[t] {
            flat -= sizes[t];
            t += 1;
        }
        let eval = |delta: f64| {
            let mut n = net.clone();
            n.parameters_mut()[t][flat] += delta;
            loss(&n, &x, kind, &y, &labels).0
        };
        let fd = (eval(FD_EPS) - eval(-FD_EPS)) / (2.0 * FD_EPS);
        let a = analytic[t][flat];
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-4);
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn gradients_match_finite_differences_mlp() {
    for act in [Activation::Relu, Activation::Tanh, Activation::Softsign, Activation::Elu] {
        for kind in [LossKind::Mse, LossKind::CrossEntropy] {
            let err = fd_check(&spec(BlockSpec::Mlp { activation: act }), kind, 11, 100);
            assert!(err <= FD_TOL, "{act:?} {kind:?}: {err:e}");
        }
    }
}

#[test]
fn gradients_match_finite_differences_pgnn() {
    let shapings = [
        ShapingSpec::Identity,
        ShapingSpec::DctLowPass { keep_fraction: 0.5 },
        ShapingSpec::LowRank {
            rank: 2,
            scale: 0.7,
            seed: 3,
        },
    ];
    for (s, shaping) in shapings.iter().enumerate() {
        for act in [Activation::Relu, Activation::Tanh, Activation::Softsign, Activation::Elu] {
            for kind in [LossKind::Mse, LossKind::CrossEntropy] {
                let err = fd_check(&pgnn(shaping.clone(), act), kind, 20 + s as u64, 100);
                assert!(err <= FD_TOL, "{shaping:?} {act:?} {kind:?}: {err:e}");
            }
        }
    }
}

#[test]
fn zero_upstream_gradient_gives_zero_gradients() {
    let net: Network<f64> = init_params(&pgnn(ShapingSpec::Identity, Activation::Tanh), 1, InitScheme::UniformFanIn).unwrap();
    let x: Matrix = gaussian_matrix(&mut seeded(2), 5, 3);
    let trace = net.forward(&x).unwrap();
    let g = net.backward(&trace, &Matrix::zeros(3, 3)).unwrap();
    assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
}

#[test]
fn single_linear_layer_closed_form() {
    let spec = NetworkSpec {
        input_dim: 3,
        hidden: vec![],
        output_dim: 2,
        block: BlockSpec::Mlp {
            activation: Activation::Relu,
        },
    };
    let mut net: Network<f64> = init_params(&spec, 4, InitScheme::UniformFanIn).unwrap();
    net.head.bias = vec![0.0; 2];
    let mut rng = seeded(5);
    let x: Matrix = gaussian_matrix(&mut rng, 3, 6);
    let y: Matrix = gaussian_matrix(&mut rng, 2, 6);
    let trace = net.forward(&x).unwrap();
    let (_, d) = mse_loss(&trace.logits, &y).unwrap();
    let g = net.backward_params(&trace, &d).unwrap();
    // 2(Wx − y)xᵀ / (batch · outputs): the loss is a mean over all entries
    let r = matmul(&net.head.weight, &x).unwrap().sub(&y).unwrap();
    let closed = pgnn_core::linalg::matmul_nt(&r, &x).unwrap().scale(2.0 / 12.0);
    assert!(g.head.weight.max_abs_diff(&closed) < 1e-12);
}

#[test]
fn trace_paths_sum_to_output() {
    let net: Network<f64> = init_params(
        &pgnn(ShapingSpec::DctLowPass { keep_fraction: 0.25 }, Activation::Elu),
        8,
        InitScheme::UniformFanIn,
    )
    .unwrap();
    let trace = net.forward(&gaussian_matrix(&mut seeded(9), 5, 7)).unwrap();
    for lt in &trace.layers {
        let sum = lt.structured.as_ref().unwrap().add(lt.correction.as_ref().unwrap()).unwrap();
        assert!(sum.max_abs_diff(&lt.output) <= 1e-12);
    }
}

fn linear_net(seed: u64) -> Network<f64> {
    let mut net: Network<f64> = init_params(
        &spec(BlockSpec::Pgnn {
            shaping: ShapingSpec::DctLowPass { keep_fraction: 0.5 },
            correction_activation: Activation::Tanh,
            correction_scale: 0.0,
        }),
        seed,
        InitScheme::UniformFanIn,
    )
    .unwrap();
    for l in &mut net.layers {
        if let Layer::Pgnn(b) = l {
            b.bias.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    net.head.bias.iter_mut().for_each(|v| *v = 0.0);
    net
}

fn explicit_product(net: &Network<f64>) -> Matrix {
    let mut m = Matrix::identity(net.input_dim());
    for l in &net.layers {
        if let Layer::Pgnn(b) = l {
            m = matmul(&b.structured_matrix(), &m).unwrap();
        }
    }
    matmul(&net.head.weight, &m).unwrap()
}

#[test]
fn linear_network_jacobian_is_weight_product() {
    let net = linear_net(3);
    let x: Matrix = gaussian_matrix(&mut seeded(1), 5, 1);
    let j = net.jacobian_input_to_logits(x.as_slice()).unwrap();
    assert!(j.max_abs_diff(&explicit_product(&net)) < 1e-10);
    let s = net.jacobian_spectrum(x.as_slice()).unwrap();
    let oracle = svd(&explicit_product(&net)).unwrap().s.into_vec();
    for (a, b) in s.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn linear_network_is_homogeneous() {
    let net = linear_net(6);
    let x: Matrix = gaussian_matrix(&mut seeded(2), 5, 4);
    let a = net.forward(&x).unwrap().logits;
    let b = net.forward(&x.scale(2.0)).unwrap().logits;
    assert!(b.max_abs_diff(&a.scale(2.0)) < 1e-10);
}

#[test]
fn relu_jacobian_matches_finite_differences() {
    let net: Network<f64> = init_params(&pgnn(ShapingSpec::Identity, Activation::Relu), 12, InitScheme::UniformFanIn).unwrap();
    let x: Matrix = gaussian_matrix(&mut seeded(13), 5, 1);
    let j = net.jacobian_input_to_logits(x.as_slice()).unwrap();
    let h = 1e-6;
    for i in 0..5 {
        let mut up = x.clone();
        up.as_mut_slice()[i] += h;
        let mut dn = x.clone();
        dn.as_mut_slice()[i] -= h;
        let fd = net.forward(&up).unwrap().logits.sub(&net.forward(&dn).unwrap().logits).unwrap().scale(0.5 / h);
        for c in 0..3 {
            assert!((fd[(c, 0)] - j[(c, i)]).abs() < 1e-5);
        }
    }
}

#[test]
fn zero_correction_matches_structured_only_jacobian() {
    let mut net: Network<f64> = init_params(&pgnn(ShapingSpec::Identity, Activation::Tanh), 14, InitScheme::UniformFanIn).unwrap();
    for l in &mut net.layers {
        if let Layer::Pgnn(b) = l {
            b.correction_scale = 0.0;
        }
    }
    let x = [0.3, -0.1, 0.8, 0.0, 1.2];
    let j = net.jacobian_input_to_logits(&x).unwrap();
    assert!(j.max_abs_diff(&explicit_product(&net)) < 1e-10);
}

#[test]
fn zero_network_outputs_zero() {
    let net: Network<f64> = init_params(&pgnn(ShapingSpec::Identity, Activation::Relu), 1, InitScheme::Zero).unwrap();
    let out = net.forward(&gaussian_matrix(&mut seeded(3), 5, 4)).unwrap().logits;
    assert_eq!(out.max_abs(), 0.0);
}

fn random_shaping(rng: &mut Rng, d: usize) -> ShapingSpec {
    match index(rng, 3) {
        0 => ShapingSpec::DctLowPass {
            keep_fraction: 0.1 + 0.9 * index(rng, 10) as f64 / 10.0,
        },
        1 => ShapingSpec::LowRank {
            rank: 1 + index(rng, d),
            scale: 0.2 + 0.8 * index(rng, 10) as f64 / 10.0,
            seed: index(rng, 1000) as u64,
        },
        _ => ShapingSpec::Identity,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn shaping_never_increases_spectral_norm(seed in 0u64..10_000, d in 2usize..12, k in 1usize..10) {
        let mut rng = seeded(seed);
        let s = random_shaping(&mut rng, d).build::<f64>(d).unwrap();
        prop_assume!(s.spectral_norm() <= 1.0 + 1e-12);
        let w: Matrix = gaussian_matrix(&mut rng, d, k);
        let sw = matmul(s.matrix(), &w).unwrap();
        prop_assert!(spectral_norm(&sw) <= spectral_norm(&w) * (1.0 + 1e-9) + 1e-12);
    }
}
