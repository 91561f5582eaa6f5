use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActivationKind {
    ReLU,
    SiLU,
    Tanh,
    Identity,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn silu_prime(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

impl ActivationKind {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::ReLU => x.max(0.0),
            ActivationKind::SiLU => silu(x),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Identity => x,
        }
    }

    /// Derivative evaluated at the pre-activation `x`.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            ActivationKind::ReLU => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::SiLU => silu_prime(x),
            ActivationKind::Tanh => 1.0 - x.tanh().powi(2),
            ActivationKind::Identity => 1.0,
        }
    }

    pub fn forward(self, x: &Matrix) -> Matrix {
        x.map(|v| self.apply(v))
    }

    /// `upstream ⊙ f'(pre)`
    pub fn backward(self, pre: &Matrix, upstream: &Matrix) -> Matrix {
        pre.zip_map(upstream, |x, u| u * self.derivative(x))
            .expect("activation backward on mismatched shapes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for kind in [
            ActivationKind::SiLU,
            ActivationKind::Tanh,
            ActivationKind::Identity,
            ActivationKind::ReLU,
        ] {
            for x in [-3.1, -0.4, 0.25, 2.7] {
                let fd = (kind.apply(x + h) - kind.apply(x - h)) / (2.0 * h);
                assert!((fd - kind.derivative(x)).abs() < 1e-7, "{kind:?} at {x}");
            }
        }
    }

    #[test]
    fn silu_is_stable_for_large_magnitudes() {
        assert_eq!(silu(-800.0), -0.0);
        assert_eq!(silu(800.0), 800.0);
        assert!(silu_prime(-800.0).abs() < 1e-300);
    }
}
