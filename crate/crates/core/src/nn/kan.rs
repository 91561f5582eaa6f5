use crate::bspline::SplineGrid;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

use super::activation::{silu, silu_prime};
use super::{GradTape, LayerGrad, TapeEntry};

/// Kolmogorov–Arnold layer in the "efficient KAN" form.
///
/// Every edge `(o, i)` carries
///
/// ```text
/// φ_oi(x) = base_weight[o,i]·SiLU(x) + spline_scaler[o,i]·Σ_b spline_weight[o,i,b]·B_b(x)
/// ```
///
/// and output `o` sums its incoming edges. There is no bias, so each edge
/// holds `num_basis + 2` parameters. `spline_weight` is stored as an
/// `(n_out, n_in·num_basis)` matrix with each input's coefficients contiguous,
/// matching the layout of [`SplineGrid::expand`].
#[derive(Clone, Debug, PartialEq)]
pub struct KanLayer {
    grid: SplineGrid,
    pub base_weight: Matrix,
    pub spline_weight: Matrix,
    pub spline_scaler: Matrix,
}

impl KanLayer {
    pub fn new(grid: SplineGrid, base_weight: Matrix, spline_weight: Matrix, spline_scaler: Matrix) -> Result<Self> {
        let (n_out, n_in) = base_weight.shape();
        if spline_scaler.shape() != (n_out, n_in) {
            return Err(Error::shape("kan scaler", base_weight.shape(), spline_scaler.shape()));
        }
        if spline_weight.shape() != (n_out, n_in * grid.num_basis()) {
            return Err(Error::shape(
                "kan spline weight",
                (n_out, n_in * grid.num_basis()),
                spline_weight.shape(),
            ));
        }
        Ok(Self {
            grid,
            base_weight,
            spline_weight,
            spline_scaler,
        })
    }

    pub fn zeros(n_in: usize, n_out: usize, grid: SplineGrid) -> Self {
        let nb = grid.num_basis();
        Self {
            grid,
            base_weight: Matrix::zeros(n_out, n_in),
            spline_weight: Matrix::zeros(n_out, n_in * nb),
            spline_scaler: Matrix::zeros(n_out, n_in),
        }
    }

    /// Kaiming-uniform base weights, Gaussian spline coefficients with
    /// standard deviation `0.1 / grid_size`, unit scalers.
    pub fn init(n_in: usize, n_out: usize, grid: SplineGrid, rng: &mut Rng) -> Self {
        let nb = grid.num_basis();
        let bound = 1.0 / (n_in as f64).sqrt();
        let noise = 0.1 / grid.grid_size() as f64;
        let base_weight = rng.uniform_matrix(n_out, n_in, -bound, bound);
        let mut spline_weight = rng.gaussian(n_out, n_in * nb);
        spline_weight.scale(noise);
        Self {
            grid,
            base_weight,
            spline_weight,
            spline_scaler: Matrix::filled(n_out, n_in, 1.0),
        }
    }

    pub fn grid(&self) -> &SplineGrid {
        &self.grid
    }

    pub fn n_in(&self) -> usize {
        self.base_weight.cols()
    }

    pub fn n_out(&self) -> usize {
        self.base_weight.rows()
    }

    pub fn param_count(&self) -> usize {
        self.base_weight.len() + self.spline_weight.len() + self.spline_scaler.len()
    }

    pub fn params(&self) -> Vec<&Matrix> {
        vec![&self.base_weight, &self.spline_weight, &self.spline_scaler]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.base_weight, &mut self.spline_weight, &mut self.spline_scaler]
    }

    pub fn param_names() -> &'static [&'static str] {
        &["base_weight", "spline_weight", "spline_scaler"]
    }

    /// `spline_weight` with every coefficient multiplied by its edge scaler.
    fn scaled_spline_weight(&self) -> Matrix {
        let nb = self.grid.num_basis();
        let mut w = self.spline_weight.clone();
        for o in 0..self.n_out() {
            let scalers = self.spline_scaler.row(o);
            for (chunk, s) in w.row_mut(o).chunks_exact_mut(nb).zip(scalers) {
                chunk.iter_mut().for_each(|c| *c *= s);
            }
        }
        w
    }

    pub fn forward(&self, x: &Matrix, tape: Option<&mut GradTape>) -> Result<Matrix> {
        if x.cols() != self.n_in() {
            return Err(Error::shape("kan_forward", x.shape(), self.base_weight.shape()));
        }
        let record = tape.is_some();
        let (basis, basis_prime) = self.grid.expand(x, record);
        let activated = x.map(silu);
        let mut out = activated.matmul_nt(&self.base_weight)?;
        out.add_matmul_nt(&basis, &self.scaled_spline_weight())?;
        if let Some(tape) = tape {
            tape.push(TapeEntry::Kan {
                activated,
                activated_prime: x.map(silu_prime),
                basis,
                basis_prime: basis_prime.expect("derivatives requested when recording"),
            });
        }
        Ok(out)
    }

    pub fn backward(&self, tape: &mut GradTape, upstream: &Matrix, param_grads: bool) -> Result<LayerGrad> {
        let TapeEntry::Kan {
            activated,
            activated_prime,
            basis,
            basis_prime,
        } = tape.pop()?
        else {
            return Err(Error::NoForward);
        };
        if upstream.shape() != (activated.rows(), self.n_out()) {
            return Err(Error::shape(
                "kan_backward",
                upstream.shape(),
                (activated.rows(), self.n_out()),
            ));
        }
        let nb = self.grid.num_basis();
        let n_in = self.n_in();

        let params = if param_grads {
            let d_base = upstream.matmul_tn(&activated)?;
            // Gradient w.r.t. the scaled coefficients, then split by the
            // product rule into coefficient and scaler parts.
            let d_scaled = upstream.matmul_tn(&basis)?;
            let mut d_spline = d_scaled.clone();
            let mut d_scaler = Matrix::zeros(self.n_out(), n_in);
            for o in 0..self.n_out() {
                let g = d_scaled.row(o);
                let w = self.spline_weight.row(o);
                let s = self.spline_scaler.row(o);
                let ds = d_spline.row_mut(o);
                for (i, &scale) in s.iter().enumerate() {
                    let span = i * nb..(i + 1) * nb;
                    ds[span.clone()].iter_mut().for_each(|v| *v *= scale);
                    let dot: f64 = g[span.clone()].iter().zip(&w[span]).map(|(a, b)| a * b).sum();
                    d_scaler.set(o, i, dot);
                }
            }
            vec![d_base, d_spline, d_scaler]
        } else {
            Vec::new()
        };

        let mut d_input = upstream.matmul(&self.base_weight)?;
        d_input
            .as_mut_slice()
            .iter_mut()
            .zip(activated_prime.as_slice())
            .for_each(|(d, p)| *d *= p);
        let d_basis = upstream.matmul(&self.scaled_spline_weight())?;
        for r in 0..d_input.rows() {
            let db = d_basis.row(r);
            let bp = basis_prime.row(r);
            for (i, d) in d_input.row_mut(r).iter_mut().enumerate() {
                let span = i * nb..(i + 1) * nb;
                *d += db[span.clone()].iter().zip(&bp[span]).map(|(a, b)| a * b).sum::<f64>();
            }
        }

        Ok(LayerGrad { params, input: d_input })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_spline_path_reduces_to_silu() {
        let grid = SplineGrid::default();
        let mut layer = KanLayer::zeros(3, 3, grid);
        layer.base_weight = Matrix::identity(3);
        layer.spline_scaler = Matrix::filled(3, 3, 0.7);
        let x = Matrix::from_rows(&[&[-0.5, 0.2, 1.7], &[3.0, -2.0, 0.0]]);
        let y = layer.forward(&x, None).unwrap();
        assert!(y.max_abs_diff(&x.map(silu)) < 1e-15);
    }

    #[test]
    fn constant_coefficients_collapse_by_partition_of_unity() {
        let grid = SplineGrid::default();
        let nb = grid.num_basis();
        let n_in = 4;
        let c = 0.3;
        let mut layer = KanLayer::zeros(n_in, 2, grid);
        layer.spline_scaler = Matrix::filled(2, n_in, 1.0);
        layer.spline_weight = Matrix::filled(2, n_in * nb, c);
        let x = Matrix::from_rows(&[&[-0.9, 0.0, 0.33, 0.99]]);
        let y = layer.forward(&x, None).unwrap();
        for v in y.as_slice() {
            assert!((v - c * n_in as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn param_count_formula() {
        let grid = SplineGrid::default();
        for (n_in, n_out) in [(1, 1), (3, 2), (17, 64), (64, 6)] {
            let layer = KanLayer::zeros(n_in, n_out, grid.clone());
            assert_eq!(layer.param_count(), n_in * n_out * (grid.num_basis() + 2));
        }
    }

    #[test]
    fn init_sets_unit_scalers() {
        let mut rng = Rng::new(0);
        let layer = KanLayer::init(5, 4, SplineGrid::default(), &mut rng);
        assert!(layer.spline_scaler.as_slice().iter().all(|&s| s == 1.0));
    }

    #[test]
    fn backward_requires_matching_entry() {
        let layer = KanLayer::zeros(2, 2, SplineGrid::default());
        let mut tape = GradTape::new();
        assert!(matches!(
            layer.backward(&mut tape, &Matrix::zeros(1, 2), true),
            Err(Error::NoForward)
        ));
    }
}
