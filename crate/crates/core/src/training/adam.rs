use crate::error::{Error, Result};
use crate::network::{Gradients, Network};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators, one flat buffer per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(net: &Network<T>, config: AdamConfig) -> Self {
        let shapes: Vec<usize> = net.parameters().iter().map(|(_, p)| p.len()).collect();
        Self {
            config,
            m: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            step: 0,
        }
    }

    /// One bias-corrected Adam update applied to flat parameter tensors.
    pub fn step_tensors(&mut self, params: &mut [&mut [T]], grads: &[&[T]], names: &[String], lr: T) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Precondition("parameter/gradient/state tensor counts differ".into()));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.len() != self.m[i].len() || params[i].len() != g.len() {
                return Err(Error::shape("adam tensor", (self.m[i].len(), 1), (g.len(), 1)));
            }
            if g.iter().any(|x| !x.is_finite()) {
                let name = names.get(i).cloned().unwrap_or_else(|| format!("tensor{i}"));
                return Err(Error::Numerical {
                    context: format!("non-finite gradient in {name}"),
                    residual: f64::NAN,
                });
            }
        }
        self.step += 1;
        let b1 = T::of(self.config.beta1);
        let b2 = T::of(self.config.beta2);
        let eps = T::of(self.config.eps);
        let t = self.step as i32;
        let bc1 = T::one() - b1.powi(t);
        let bc2 = T::one() - b2.powi(t);
        for (i, g) in grads.iter().enumerate() {
            let p = &mut params[i];
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for j in 0..g.len() {
                let gj = g[j];
                m[j] = b1 * m[j] + (T::one() - b1) * gj;
                v[j] = b2 * v[j] + (T::one() - b2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Applies one Adam step to every trainable tensor of `net`.
pub fn adam_step<T: Scalar>(net: &mut Network<T>, grads: &Gradients<T>, state: &mut AdamState<T>, lr: T) -> Result<()> {
    let names: Vec<String> = net.parameters().into_iter().map(|(n, _)| n).collect();
    let g = grads.tensors();
    let mut p = net.parameters_mut();
    state.step_tensors(&mut p, &g, &names, lr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(sizes: &[usize]) -> AdamState<f64> {
        AdamState {
            config: AdamConfig::default(),
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_and_decays_moments() {
        let g = vec![0.0; 3];
        let mut fresh = state(&[3]);
        let mut q = vec![1.0, 2.0, 3.0];
        fresh.step_tensors(&mut [&mut q[..]], &[&g[..]], &[], 1e-3).unwrap();
        assert_eq!(q, vec![1.0, 2.0, 3.0]);

        let mut s = state(&[3]);
        s.m[0] = vec![0.5, -0.5, 1.0];
        s.v[0] = vec![0.25, 0.25, 1.0];
        s.step = 4;
        let mut p = vec![1.0, 2.0, 3.0];
        s.step_tensors(&mut [&mut p[..]], &[&g[..]], &[], 1e-3).unwrap();
        assert!((s.m[0][0] - 0.45).abs() < 1e-15);
        assert!((s.v[0][2] - 0.999).abs() < 1e-15);
        assert_eq!(s.step, 5);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut s = state(&[4]);
        let mut p = vec![0.0; 4];
        let g = vec![3.0, -0.2, 1e-2, -50.0];
        let lr = 1e-3;
        s.step_tensors(&mut [&mut p[..]], &[&g[..]], &[], lr).unwrap();
        for (x, gi) in p.iter().zip(&g) {
            // m̂ = g, v̂ = g², update = −lr·g/(|g|+ε)
            let expect = -lr * gi / (gi.abs() + 1e-8);
            assert!((x - expect).abs() < 1e-15);
            assert!((x.abs() - lr).abs() < 1e-6);
            assert_eq!(x.signum(), -gi.signum());
        }
    }

    #[test]
    fn non_finite_gradient_names_the_tensor() {
        let mut s = state(&[2]);
        let mut p = vec![0.0; 2];
        let g = vec![f64::NAN, 0.0];
        let err = s
            .step_tensors(&mut [&mut p[..]], &[&g[..]], &["layer1.weight".to_string()], 1e-3)
            .unwrap_err();
        assert!(err.to_string().contains("layer1.weight"));
        assert_eq!(s.step, 0);
    }
}
