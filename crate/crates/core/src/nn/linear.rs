use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

use super::{GradTape, LayerGrad, TapeEntry};

/// `y = x·Wᵀ + b` with `W: (n_out, n_in)` and `b: (n_out, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearLayer {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl LinearLayer {
    pub fn new(weight: Matrix, bias: Matrix) -> Result<Self> {
        if bias.shape() != (weight.rows(), 1) {
            return Err(Error::shape("linear bias", weight.shape(), bias.shape()));
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            weight: Matrix::zeros(n_out, n_in),
            bias: Matrix::zeros(n_out, 1),
        }
    }

    /// Kaiming-uniform weights (bound `1/√n_in`) and zero bias.
    pub fn init(n_in: usize, n_out: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        Self {
            weight: rng.uniform_matrix(n_out, n_in, -bound, bound),
            bias: Matrix::zeros(n_out, 1),
        }
    }

    pub fn n_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn n_out(&self) -> usize {
        self.weight.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn params(&self) -> Vec<&Matrix> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn param_names() -> &'static [&'static str] {
        &["weight", "bias"]
    }

    pub fn forward(&self, x: &Matrix, tape: Option<&mut GradTape>) -> Result<Matrix> {
        if x.cols() != self.n_in() {
            return Err(Error::shape("linear_forward", x.shape(), self.weight.shape()));
        }
        let mut out = x.matmul_nt(&self.weight)?;
        let b = self.bias.as_slice();
        for r in 0..out.rows() {
            out.row_mut(r).iter_mut().zip(b).for_each(|(o, b)| *o += b);
        }
        if let Some(tape) = tape {
            tape.push(TapeEntry::Linear { input: x.clone() });
        }
        Ok(out)
    }

    pub fn backward(&self, tape: &mut GradTape, upstream: &Matrix, param_grads: bool) -> Result<LayerGrad> {
        let TapeEntry::Linear { input } = tape.pop()? else {
            return Err(Error::NoForward);
        };
        if upstream.shape() != (input.rows(), self.n_out()) {
            return Err(Error::shape(
                "linear_backward",
                upstream.shape(),
                (input.rows(), self.n_out()),
            ));
        }
        let params = if param_grads {
            let dw = upstream.matmul_tn(&input)?;
            let db = upstream.column_sums().transpose();
            vec![dw, db]
        } else {
            Vec::new()
        };
        Ok(LayerGrad {
            params,
            input: upstream.matmul(&self.weight)?,
        })
    }
}
