//! B-spline bases on a fixed, uniformly extended knot grid.
//!
//! The grid has `grid_size` intervals on `[lo, hi]` plus `order` extra knots
//! on each side, giving `grid_size + 2·order + 1` knots and
//! `grid_size + order` basis functions of degree `order`. Inputs outside
//! `[lo, hi]` are evaluated on the extended knots as-is; outside the extended
//! range every basis value is zero.

use crate::matrix::Matrix;

pub const DEFAULT_GRID_SIZE: usize = 5;
pub const DEFAULT_ORDER: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct SplineGrid {
    grid_size: usize,
    order: usize,
    lo: f64,
    hi: f64,
    h: f64,
    knots: Vec<f64>,
}

impl Default for SplineGrid {
    fn default() -> Self {
        Self::new(DEFAULT_GRID_SIZE, DEFAULT_ORDER, -1.0, 1.0)
    }
}

impl SplineGrid {
    /// Panics if `grid_size == 0` or `lo >= hi`.
    pub fn new(grid_size: usize, order: usize, lo: f64, hi: f64) -> Self {
        assert!(grid_size > 0, "grid needs at least one interval");
        assert!(lo < hi, "empty grid range");
        let h = (hi - lo) / grid_size as f64;
        let knots = (0..grid_size + 2 * order + 1)
            .map(|i| knot_at(lo, h, order, i as isize))
            .collect();
        Self {
            grid_size,
            order,
            lo,
            hi,
            h,
            knots,
        }
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn num_basis(&self) -> usize {
        self.grid_size + self.order
    }

    /// Knot `i` of the infinite uniform extension (`i` may fall outside the
    /// stored knot vector).
    #[inline]
    fn knot(&self, i: isize) -> f64 {
        knot_at(self.lo, self.h, self.order, i)
    }

    /// Index `j` of the degree-0 span `[t_j, t_{j+1})` containing `x`, if it
    /// lies inside the stored knot vector.
    fn span(&self, x: f64) -> Option<usize> {
        let last = self.knots.len() - 1;
        if !(x >= self.knots[0] && x < self.knots[last]) {
            return None;
        }
        let mut j = (((x - self.knots[0]) / self.h).floor() as isize).clamp(0, last as isize - 1) as usize;
        while j > 0 && x < self.knots[j] {
            j -= 1;
        }
        while j + 1 < last && x >= self.knots[j + 1] {
            j += 1;
        }
        Some(j)
    }

    /// Writes the `num_basis()` basis values at `x` into `values` and, when
    /// given, their derivatives into `derivs`.
    ///
    /// Uses the triangular form of the Cox–de Boor recursion over the
    /// `order + 1` bases that are nonzero on the span of `x`.
    pub fn eval_into(&self, x: f64, values: &mut [f64], derivs: Option<&mut [f64]>) {
        let nb = self.num_basis();
        debug_assert_eq!(values.len(), nb);
        values.iter_mut().for_each(|v| *v = 0.0);
        let mut derivs = derivs;
        if let Some(d) = derivs.as_deref_mut() {
            d.iter_mut().for_each(|v| *v = 0.0);
        }
        let Some(span) = self.span(x) else {
            return;
        };
        let p = self.order;
        let s = span as isize;

        // n[r] holds B_{span-j+r, j} after pass j.
        let mut n = [0.0f64; 16];
        let mut prev = [0.0f64; 16];
        let mut left = [0.0f64; 16];
        let mut right = [0.0f64; 16];
        assert!(p < 15, "spline order too large");
        n[0] = 1.0;
        for j in 1..=p {
            if j == p {
                prev[..p].copy_from_slice(&n[..p]);
            }
            left[j] = x - self.knot(s + 1 - j as isize);
            right[j] = self.knot(s + j as isize) - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }

        // Basis index of n[r] is span - p + r; keep those inside 0..nb.
        for (r, &v) in n.iter().enumerate().take(p + 1) {
            let idx = s - p as isize + r as isize;
            if idx >= 0 && (idx as usize) < nb {
                values[idx as usize] = v;
            }
        }

        if let Some(d) = derivs {
            if p == 0 {
                return;
            }
            // B'_{i,p} = (B_{i,p-1} - B_{i+1,p-1}) / h on a uniform grid.
            // prev[r] = B_{span-p+1+r, p-1}, r in 0..p.
            for r in 0..=p {
                let lower = if r == 0 { 0.0 } else { prev[r - 1] };
                let upper = if r == p { 0.0 } else { prev[r] };
                let idx = s - p as isize + r as isize;
                if idx >= 0 && (idx as usize) < nb {
                    d[idx as usize] = (lower - upper) / self.h;
                }
            }
        }
    }

    /// Basis values for every entry of `x` (`batch × n_in`), laid out as
    /// `batch × (n_in · num_basis())` with each input's bases contiguous.
    pub fn basis_values(&self, x: &Matrix) -> Matrix {
        self.expand(x, false).0
    }

    /// d/dx of [`basis_values`](Self::basis_values), same layout.
    pub fn basis_derivatives(&self, x: &Matrix) -> Matrix {
        self.expand(x, true).1.expect("derivatives requested")
    }

    /// Values and (optionally) derivatives in one pass.
    pub fn expand(&self, x: &Matrix, with_derivs: bool) -> (Matrix, Option<Matrix>) {
        let nb = self.num_basis();
        let width = x.cols() * nb;
        let mut vals = Matrix::zeros(x.rows(), width);
        let mut ders = with_derivs.then(|| Matrix::zeros(x.rows(), width));
        for r in 0..x.rows() {
            for (i, &xi) in x.row(r).iter().enumerate() {
                let v = &mut vals.row_mut(r)[i * nb..(i + 1) * nb];
                match ders.as_mut() {
                    Some(d) => self.eval_into(xi, v, Some(&mut d.row_mut(r)[i * nb..(i + 1) * nb])),
                    None => self.eval_into(xi, v, None),
                }
            }
        }
        (vals, ders)
    }
}

#[inline]
fn knot_at(lo: f64, h: f64, order: usize, i: isize) -> f64 {
    lo + (i - order as isize) as f64 * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    type Q = Ratio<i64>;

    /// Textbook recursive Cox–de Boor over exact rational knots.
    fn cox_de_boor(knots: &[Q], i: usize, p: usize, x: Q) -> Q {
        if p == 0 {
            return if knots[i] <= x && x < knots[i + 1] {
                Q::from_integer(1)
            } else {
                Q::from_integer(0)
            };
        }
        let a = (x - knots[i]) / (knots[i + p] - knots[i]) * cox_de_boor(knots, i, p - 1, x);
        let b = (knots[i + p + 1] - x) / (knots[i + p + 1] - knots[i + 1]) * cox_de_boor(knots, i + 1, p - 1, x);
        a + b
    }

    fn rational_knots(g: i64, k: i64) -> Vec<Q> {
        // lo = -1, h = 2/g
        (0..g + 2 * k + 1)
            .map(|i| Q::from_integer(-1) + Q::new(2 * (i - k), g))
            .collect()
    }

    fn eval(grid: &SplineGrid, x: f64) -> (Vec<f64>, Vec<f64>) {
        let mut v = vec![0.0; grid.num_basis()];
        let mut d = vec![0.0; grid.num_basis()];
        grid.eval_into(x, &mut v, Some(&mut d));
        (v, d)
    }

    #[test]
    fn knot_layout() {
        let g = SplineGrid::default();
        assert_eq!(g.knots().len(), 5 + 2 * 3 + 1);
        assert_eq!(g.num_basis(), 8);
        for w in g.knots().windows(2) {
            assert!((w[1] - w[0] - 0.4).abs() < 1e-12);
        }
        assert!((g.knots()[3] + 1.0).abs() < 1e-15);
        assert!((g.knots()[8] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cubic_at_zero_matches_exact_oracle() {
        let grid = SplineGrid::default();
        let knots = rational_knots(5, 3);
        for x in [Q::from_integer(0), Q::new(37, 100), Q::new(-9, 10), Q::new(1, 1)] {
            let (vals, _) = eval(&grid, *x.numer() as f64 / *x.denom() as f64);
            for (b, v) in vals.iter().enumerate() {
                let exact = cox_de_boor(&knots, b, 3, x);
                let exact = *exact.numer() as f64 / *exact.denom() as f64;
                assert!((v - exact).abs() < 1e-12, "x={x} b={b}: {v} vs {exact}");
            }
        }
    }

    #[test]
    fn degree_zero_is_an_indicator() {
        let grid = SplineGrid::new(5, 0, -1.0, 1.0);
        let (vals, ders) = eval(&grid, -0.9);
        assert_eq!(vals, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(ders.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn linear_slopes_are_plus_minus_inverse_spacing() {
        let grid = SplineGrid::new(5, 1, -1.0, 1.0);
        let inv_h = 1.0 / grid.spacing();
        for x in [-0.95, -0.3, 0.1, 0.77] {
            let (_, ders) = eval(&grid, x);
            for d in ders {
                assert!(d == 0.0 || (d.abs() - inv_h).abs() < 1e-9, "slope {d} at {x}");
            }
        }
    }

    #[test]
    fn partition_of_unity_on_range() {
        for order in 0..=4 {
            let grid = SplineGrid::new(5, order, -1.0, 1.0);
            // Half-open [lo, hi): degree-0 spans do not include their right end.
            for i in 0..1000 {
                let x = -1.0 + 2.0 * i as f64 / 1000.0;
                let (vals, ders) = eval(&grid, x);
                let sum: f64 = vals.iter().sum();
                assert!((sum - 1.0).abs() < 1e-10, "order {order} x {x} sum {sum}");
                assert!(vals.iter().all(|&v| v >= 0.0));
                if order > 0 && i > 0 {
                    let dsum: f64 = ders.iter().sum();
                    assert!(dsum.abs() < 1e-9, "derivative sum {dsum}");
                }
            }
        }
    }

    #[test]
    fn outside_extended_knots_is_zero() {
        let grid = SplineGrid::default();
        for x in [-3.0, 2.21, 10.0] {
            let (vals, ders) = eval(&grid, x);
            assert!(vals.iter().chain(&ders).all(|&v| v == 0.0));
        }
        // Inside the extension but outside [lo, hi]: some bases still active.
        let (vals, _) = eval(&grid, 1.3);
        assert!(vals.iter().any(|&v| v > 0.0));
    }

    #[test]
    fn derivatives_match_central_differences() {
        let grid = SplineGrid::default();
        let h = 1e-6;
        for x in [0.37, -0.55, 0.93, 1.2] {
            let (_, d) = eval(&grid, x);
            let (vp, _) = eval(&grid, x + h);
            let (vm, _) = eval(&grid, x - h);
            for b in 0..grid.num_basis() {
                let fd = (vp[b] - vm[b]) / (2.0 * h);
                assert!((fd - d[b]).abs() < 1e-5, "x {x} b {b}: {fd} vs {}", d[b]);
            }
        }
    }

    #[test]
    fn matrix_layout_groups_bases_per_input() {
        let grid = SplineGrid::default();
        let x = Matrix::from_rows(&[&[0.1, -0.4], &[0.9, 0.0]]);
        let vals = grid.basis_values(&x);
        assert_eq!(vals.shape(), (2, 16));
        let (single, _) = eval(&grid, -0.4);
        assert_eq!(&vals.row(0)[8..16], single.as_slice());
        let ders = grid.basis_derivatives(&x);
        assert_eq!(ders.shape(), vals.shape());
    }
}
