//! Centered finite-difference first-derivative operators with periodic wrap,
//! and their application to factored matrices.
//!
//! For `x = u·v`, `D·x = (D·u)·v`, so the derivative of a rank-`r` snapshot
//! costs `O(m·r·w)` multiply-adds for a stencil of width `w` instead of the
//! `O(m·n·w)` needed on the full matrix.

use super::{FactorPair, LinalgError, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
}

/// Multiply-add count reported by instrumented operator applications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct FlopCount(pub u64);

/// Banded (circulant) first-derivative matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedOperator {
    size: usize,
    offsets: Vec<isize>,
    coeffs: Vec<f64>,
    boundary: Boundary,
}

/// Centered first-derivative weights for offsets `1..=order/2` (the
/// negative offsets carry the opposite sign).
fn centered_weights(order: usize) -> Option<&'static [f64]> {
    match order {
        2 => Some(&[1.0 / 2.0]),
        4 => Some(&[2.0 / 3.0, -1.0 / 12.0]),
        6 => Some(&[3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0]),
        _ => None,
    }
}

pub fn build_diff_operator(
    size: usize,
    spacing: f64,
    order: usize,
    boundary: Boundary,
) -> Result<BandedOperator, LinalgError> {
    let weights = centered_weights(order).ok_or(LinalgError::UnsupportedOrder(order))?;
    let half = weights.len();
    if size < 2 * half + 1 {
        return Err(LinalgError::OperatorTooSmall {
            size,
            min: 2 * half + 1,
        });
    }
    let mut offsets = Vec::with_capacity(2 * half);
    let mut coeffs = Vec::with_capacity(2 * half);
    for (k, &w) in weights.iter().enumerate().rev() {
        offsets.push(-(k as isize + 1));
        coeffs.push(-w / spacing);
    }
    for (k, &w) in weights.iter().enumerate() {
        offsets.push(k as isize + 1);
        coeffs.push(w / spacing);
    }
    Ok(BandedOperator {
        size,
        offsets,
        coeffs,
        boundary,
    })
}

impl BandedOperator {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn stencil(&self) -> impl Iterator<Item = (isize, f64)> + '_ {
        self.offsets.iter().copied().zip(self.coeffs.iter().copied())
    }

    pub fn stencil_width(&self) -> usize {
        self.offsets.len()
    }

    #[inline]
    fn wrap(&self, i: usize, off: isize) -> usize {
        let n = self.size as isize;
        (((i as isize + off) % n + n) % n) as usize
    }

    pub fn to_dense(&self) -> Matrix {
        let mut d = Matrix::zeros(self.size, self.size);
        for i in 0..self.size {
            for (off, c) in self.stencil() {
                d[(i, self.wrap(i, off))] += c;
            }
        }
        d
    }

    /// `D·x` acting on the rows index of `x`.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix, LinalgError> {
        self.apply_counted(x).map(|(y, _)| y)
    }

    /// `D·x` plus the number of multiply-adds performed.
    pub fn apply_counted(&self, x: &Matrix) -> Result<(Matrix, FlopCount), LinalgError> {
        if x.rows() != self.size {
            return Err(LinalgError::DimensionMismatch {
                op: "banded apply",
                left: (self.size, self.size),
                right: x.shape(),
            });
        }
        let mut y = Matrix::zeros(x.rows(), x.cols());
        let mut flops = 0u64;
        for i in 0..self.size {
            let out = y.row_mut(i);
            for (off, c) in self.stencil() {
                let src = x.row(self.wrap(i, off));
                for (o, &s) in out.iter_mut().zip(src) {
                    *o += c * s;
                }
                flops += src.len() as u64;
            }
        }
        Ok((y, FlopCount(flops)))
    }

    /// `x·Dᵀ`, the derivative along the column index of `x`.
    pub fn apply_transposed_counted(&self, x: &Matrix) -> Result<(Matrix, FlopCount), LinalgError> {
        if x.cols() != self.size {
            return Err(LinalgError::DimensionMismatch {
                op: "banded apply (columns)",
                left: x.shape(),
                right: (self.size, self.size),
            });
        }
        let mut y = Matrix::zeros(x.rows(), x.cols());
        let mut flops = 0u64;
        for r in 0..x.rows() {
            let src = x.row(r);
            let out = y.row_mut(r);
            for (j, o) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (off, c) in self.offsets.iter().zip(&self.coeffs) {
                    acc += c * src[self.wrap(j, *off)];
                }
                *o = acc;
            }
            flops += (self.size * self.offsets.len()) as u64;
        }
        Ok((y, FlopCount(flops)))
    }
}

/// Spatial derivative of a factored snapshot: returns `(D·u, v)`.
pub fn apply_derivative_factored(
    d: &BandedOperator,
    u: &Matrix,
    v: &Matrix,
) -> Result<FactorPair, LinalgError> {
    let du = d.apply(u)?;
    FactorPair::new(du, v.clone())
}

/// Velocity derivative of a factored snapshot: returns `(u, v·Dᵀ)`, whose
/// product is `(u·v)·Dᵀ`.
pub fn apply_velocity_derivative_factored(
    d: &BandedOperator,
    u: &Matrix,
    v: &Matrix,
) -> Result<FactorPair, LinalgError> {
    let (dv, _) = d.apply_transposed_counted(v)?;
    FactorPair::new(u.clone(), dv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::matmul;
    use std::f64::consts::PI;

    fn sin_grid(n: usize) -> (Matrix, Vec<f64>, f64) {
        let h = 2.0 * PI / n as f64;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let f = Matrix::from_fn(n, 1, |i, _| xs[i].sin());
        (f, xs, h)
    }

    fn max_error(n: usize, order: usize) -> f64 {
        let (f, xs, h) = sin_grid(n);
        let d = build_diff_operator(n, h, order, Boundary::Periodic).unwrap();
        let df = d.apply(&f).unwrap();
        (0..n).map(|i| (df[(i, 0)] - xs[i].cos()).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn constant_maps_to_zero() {
        for order in [2, 4, 6] {
            let d = build_diff_operator(32, 0.1, order, Boundary::Periodic).unwrap();
            let y = d.apply(&Matrix::from_fn(32, 3, |_, _| 2.5)).unwrap();
            assert!(y.max_abs() < 1e-13);
        }
    }

    #[test]
    fn row_sums_vanish() {
        for order in [2, 4, 6] {
            let d = build_diff_operator(64, 4.0 * PI / 64.0, order, Boundary::Periodic).unwrap();
            let dense = d.to_dense();
            for i in 0..64 {
                let s: f64 = dense.row(i).iter().sum();
                assert!(s.abs() < 1e-14, "order {order} row {i}: {s}");
            }
            // Antisymmetric.
            let t = dense.transpose().scaled(-1.0);
            assert!(dense.distance_sq(&t).unwrap() < 1e-28);
        }
    }

    #[test]
    fn second_order_sine_bound() {
        let n = 256;
        let h = 2.0 * PI / n as f64;
        // Leading error term h²/6·|f'''| with |f'''| ≤ 1.
        assert!(max_error(n, 2) <= h * h / 6.0 * 1.01);
    }

    #[test]
    fn refinement_ratio_matches_order() {
        for order in [2, 4, 6] {
            let ratio = max_error(32, order) / max_error(64, order);
            let expected = 2f64.powi(order as i32);
            assert!(
                (ratio / expected - 1.0).abs() < 0.1,
                "order {order}: ratio {ratio}"
            );
        }
    }

    #[test]
    fn unsupported_order_and_tiny_size() {
        assert!(matches!(
            build_diff_operator(16, 0.1, 5, Boundary::Periodic),
            Err(LinalgError::UnsupportedOrder(5))
        ));
        assert!(matches!(
            build_diff_operator(4, 0.1, 6, Boundary::Periodic),
            Err(LinalgError::OperatorTooSmall { .. })
        ));
    }

    #[test]
    fn factored_constant_columns_vanish() {
        let d = build_diff_operator(16, 0.2, 4, Boundary::Periodic).unwrap();
        let u = Matrix::from_fn(16, 3, |_, j| j as f64 + 1.0);
        let v = Matrix::from_fn(3, 5, |i, j| (i + 2 * j) as f64);
        let pair = apply_derivative_factored(&d, &u, &v).unwrap();
        assert!(pair.product().max_abs() < 1e-12);
    }

    #[test]
    fn velocity_derivative_identity() {
        let d = build_diff_operator(12, 0.3, 2, Boundary::Periodic).unwrap();
        let u = Matrix::from_fn(7, 2, |i, j| ((i * 3 + j) as f64).cos());
        let v = Matrix::from_fn(2, 12, |i, j| ((i + j * 5) as f64).sin());
        let pair = apply_velocity_derivative_factored(&d, &u, &v).unwrap();
        let x = matmul(&u, &v).unwrap();
        let direct = matmul(&x, &d.to_dense().transpose()).unwrap();
        assert!(pair.product().distance_sq(&direct).unwrap().sqrt() < 1e-12 * direct.frobenius_norm());
    }

    #[test]
    fn dimension_mismatch() {
        let d = build_diff_operator(16, 0.2, 2, Boundary::Periodic).unwrap();
        assert!(apply_derivative_factored(&d, &Matrix::zeros(8, 2), &Matrix::zeros(2, 4)).is_err());
    }
}
