use crate::network::Gradients;
use crate::rng::{standard_normal, Rng};
use crate::scalar::Scalar;

/// Adds i.i.d. `N(0, sigma²)` to every gradient entry. `sigma == 0` leaves the
/// gradients (and the rng) untouched.
pub fn add_gradient_noise<T: Scalar>(grads: &mut Gradients<T>, sigma: f64, rng: &mut Rng) {
    if sigma == 0.0 {
        return;
    }
    let s = T::of(sigma);
    for t in grads.tensors_mut() {
        for g in t.iter_mut() {
            *g += s * standard_normal::<T>(rng);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::LayerGrad;
    use crate::rng::seeded;
    use crate::Matrix;

    fn grads(n: usize) -> Gradients<f64> {
        let g = LayerGrad {
            weight: Matrix::zeros(1, n),
            bias: vec![0.0],
            correction: None,
        };
        Gradients {
            layers: vec![],
            head: g,
            input_grads: vec![],
        }
    }

    #[test]
    fn zero_sigma_is_identity() {
        let mut g = grads(5);
        g.head.weight.as_mut_slice()[2] = 0.7;
        let before = g.clone();
        add_gradient_noise(&mut g, 0.0, &mut seeded(1));
        assert_eq!(g, before);
    }

    #[test]
    fn noise_std_matches_sigma() {
        let mut g = grads(100_000);
        add_gradient_noise(&mut g, 0.05, &mut seeded(3));
        let x = g.head.weight.as_slice();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
        assert!((var.sqrt() / 0.05 - 1.0).abs() < 0.05);
    }

    #[test]
    fn deterministic_per_seed() {
        let mut a = grads(50);
        let mut b = grads(50);
        add_gradient_noise(&mut a, 0.1, &mut seeded(9));
        add_gradient_noise(&mut b, 0.1, &mut seeded(9));
        assert_eq!(a, b);
    }
}
