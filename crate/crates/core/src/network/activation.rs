use serde::{Deserialize, Serialize};

use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

/// Pointwise nonlinearity. `Identity` is the "no activation" case used by
/// linear heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[serde(alias = "none")]
    Identity,
    Relu,
    Tanh,
    Softsign,
    /// ELU with α = 1.
    Elu,
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::Identity,
        Activation::Relu,
        Activation::Tanh,
        Activation::Softsign,
        Activation::Elu,
    ];

    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
            Activation::Softsign => x / (T::one() + x.abs()),
            Activation::Elu => {
                if x > T::zero() {
                    x
                } else {
                    x.exp_m1()
                }
            }
        }
    }

    /// Derivative evaluated at the pre-activation value `x`.
    #[inline]
    pub fn derivative<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                T::one() - t * t
            }
            Activation::Softsign => {
                let d = T::one() + x.abs();
                T::one() / (d * d)
            }
            Activation::Elu => {
                if x > T::zero() {
                    T::one()
                } else {
                    x.exp()
                }
            }
        }
    }

    /// Global Lipschitz constant.
    pub fn lipschitz(self) -> f64 {
        1.0
    }

    pub fn map<T: Scalar>(self, m: &DenseMatrix<T>) -> DenseMatrix<T> {
        if self == Activation::Identity {
            return m.clone();
        }
        m.map(|x| self.apply(x))
    }

    pub(crate) fn tag(self) -> u32 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
            Activation::Softsign => 3,
            Activation::Elu => 4,
        }
    }

    pub(crate) fn from_tag(tag: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.tag() == tag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for act in Activation::ALL {
            for &x in &[-2.0f64, -0.3, 0.4, 1.7] {
                let fd = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                assert!((fd - act.derivative(x)).abs() < 1e-8, "{act:?} at {x}");
            }
        }
    }

    #[test]
    fn tags_round_trip() {
        for act in Activation::ALL {
            assert_eq!(Activation::from_tag(act.tag()), Some(act));
        }
        assert_eq!(Activation::from_tag(99), None);
    }

    #[test]
    fn elu_is_identity_on_positives() {
        assert_eq!(Activation::Elu.apply(1.0f64), 1.0);
        assert!((Activation::Elu.apply(-1.0f64) - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
    }
}
