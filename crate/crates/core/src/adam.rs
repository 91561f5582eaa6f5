//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPS: f64 = 1e-8;

/// First/second moment estimates for one parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Matrix,
    v: Matrix,
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize, lr: f64) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            t: 0,
            lr,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            eps: DEFAULT_EPS,
        }
    }

    pub fn for_param(param: &Matrix, lr: f64) -> Self {
        Self::new(param.rows(), param.cols(), lr)
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update to `param` in place.
    pub fn step(&mut self, param: &mut Matrix, grad: &Matrix) -> Result<()> {
        if param.shape() != grad.shape() {
            return Err(Error::shape("adam_step", param.shape(), grad.shape()));
        }
        if param.shape() != self.m.shape() {
            return Err(Error::shape("adam_step", param.shape(), self.m.shape()));
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        let p = param.as_mut_slice();
        let g = grad.as_slice();
        let m = self.m.as_mut_slice();
        let v = self.v.as_mut_slice();
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// One `AdamState` per tensor of a parameter list.
#[derive(Clone, Debug)]
pub struct Optimizer {
    states: Vec<AdamState>,
}

impl Optimizer {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Matrix>, lr: f64) -> Self {
        Self {
            states: params.into_iter().map(|p| AdamState::for_param(p, lr)).collect(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Matrix>, grads: &[Matrix]) -> Result<()> {
        if params.len() != self.states.len() || grads.len() != self.states.len() {
            return Err(Error::InvalidArgument(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.states.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((state, p), g) in self.states.iter_mut().zip(params).zip(grads) {
            state.step(p, g)?;
        }
        Ok(())
    }
}

/// Adam on a single scalar, used for the log-temperatures.
#[derive(Clone, Debug)]
pub struct ScalarAdam {
    state: AdamState,
}

impl ScalarAdam {
    pub fn new(lr: f64) -> Self {
        Self {
            state: AdamState::new(1, 1, lr),
        }
    }

    pub fn step(&mut self, value: &mut f64, grad: f64) {
        let mut p = Matrix::filled(1, 1, *value);
        self.state
            .step(&mut p, &Matrix::filled(1, 1, grad))
            .expect("1x1 shapes always agree");
        *value = p.get(0, 0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = Matrix::from_rows(&[&[1.0, -2.0], &[0.5, 3.0]]);
        let before = p.clone();
        let mut st = AdamState::for_param(&p, 0.1);
        for _ in 0..25 {
            st.step(&mut p, &Matrix::zeros(2, 2)).unwrap();
            assert_eq!(p, before);
        }
        assert_eq!(st.steps(), 25);
    }

    #[test]
    fn first_step_closed_form() {
        // m̂ = g, v̂ = g² on the first step, so the update is lr·g/(|g|+eps).
        let mut p = Matrix::filled(1, 1, 1.0);
        let mut st = AdamState::new(1, 1, 0.1);
        st.step(&mut p, &Matrix::filled(1, 1, 1.0)).unwrap();
        let expected = 1.0 - 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((p.get(0, 0) - expected).abs() < 1e-12);
        assert!((p.get(0, 0) - 0.9).abs() < 1e-6);
    }

    #[test]
    fn steps_accumulate() {
        let g = Matrix::filled(1, 1, 1.0);
        let mut once = Matrix::filled(1, 1, 1.0);
        let mut st = AdamState::new(1, 1, 0.1);
        st.step(&mut once, &g).unwrap();
        let mut twice = once.clone();
        st.step(&mut twice, &g).unwrap();
        assert_ne!(once, twice);
        assert_eq!(st.steps(), 2);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut p = Matrix::zeros(2, 2);
        let mut st = AdamState::for_param(&p, 0.1);
        assert!(matches!(
            st.step(&mut p, &Matrix::zeros(2, 1)),
            Err(Error::Shape { .. })
        ));
    }
}
