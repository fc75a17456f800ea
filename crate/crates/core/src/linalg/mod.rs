//! Dense and Krylov linear-algebra kernels.
//!
//! Everything here is a pure function over immutable inputs. Accumulation
//! order is fixed so repeated runs on one machine are bit-identical.

mod diff;
mod jacobi;
mod lanczos;
mod lstsq;
mod matrix;

pub use diff::{
    apply_derivative_factored, apply_velocity_derivative_factored, build_diff_operator,
    Boundary, BandedOperator, FlopCount,
};
pub use jacobi::svd_dense;
pub use lanczos::{svd_truncated, svd_truncated_with, LanczosOptions};
pub use lstsq::{lstsq, lstsq_detailed, LstsqSolution, RANK_TOLERANCE};
pub use matrix::Matrix;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("{op}: dimension mismatch {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix must have at least one row and one column")]
    EmptyMatrix,
    #[error("rows have differing lengths")]
    RaggedRows,
    #[error("expected {expected} entries, got {got}")]
    DataLength { expected: usize, got: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("{method} did not converge after {iterations} iterations")]
    NoConvergence {
        method: &'static str,
        iterations: usize,
    },
    #[error("rank {rank} out of range 1..{limit}")]
    RankOutOfRange { rank: usize, limit: usize },
    #[error("unsupported derivative order {0}; expected 2, 4 or 6")]
    UnsupportedOrder(usize),
    #[error("operator size must be at least {min}, got {size}")]
    OperatorTooSmall { size: usize, min: usize },
}

/// Low-rank factor pair `x ≈ u·v` with `u: m×r`, `v: r×n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub u: Matrix,
    pub v: Matrix,
}

impl FactorPair {
    pub fn new(u: Matrix, v: Matrix) -> Result<Self, LinalgError> {
        if u.cols() != v.rows() {
            return Err(LinalgError::DimensionMismatch {
                op: "factor pair",
                left: u.shape(),
                right: v.shape(),
            });
        }
        Ok(Self { u, v })
    }

    pub fn rank(&self) -> usize {
        self.u.cols()
    }

    pub fn product(&self) -> Matrix {
        matmul(&self.u, &self.v).expect("inner dimensions checked at construction")
    }
}

/// Singular value decomposition `x ≈ left · diag(singular_values) · right`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// m×k, orthonormal columns.
    pub left: Matrix,
    /// Nonincreasing, nonnegative, length k.
    pub singular_values: Vec<f64>,
    /// k×n, orthonormal rows.
    pub right: Matrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Leading-`r` truncation as a factor pair `(U·Σ, V)`.
    pub fn factors(&self, r: usize) -> (Matrix, Matrix) {
        let r = r.min(self.rank());
        let mut u = self.left.leading_columns(r);
        for i in 0..u.rows() {
            for (j, s) in self.singular_values[..r].iter().enumerate() {
                u[(i, j)] *= s;
            }
        }
        (u, self.right.leading_rows(r))
    }

    /// Rank-`r` reconstruction `U_r Σ_r V_r`.
    pub fn reconstruct(&self, r: usize) -> Matrix {
        let (us, v) = self.factors(r);
        matmul(&us, &v).expect("factor shapes agree by construction")
    }
}

/// Matrix product with a fixed accumulation order: entry `(i, j)` is summed
/// over `k` ascending starting from zero, so the result equals the naive
/// triple loop bit for bit.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix, LinalgError> {
    if a.cols() != b.rows() {
        return Err(LinalgError::DimensionMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let (m, kdim, n) = (a.rows(), a.cols(), b.cols());
    let mut c = Matrix::zeros(m, n);
    let bs = b.as_slice();
    for i in 0..m {
        let arow = a.row(i);
        let crow = c.row_mut(i);
        for k in 0..kdim {
            let aik = arow[k];
            let brow = &bs[k * n..(k + 1) * n];
            for (cij, &bkj) in crow.iter_mut().zip(brow) {
                *cij += aik * bkj;
            }
        }
    }
    Ok(c)
}

/// `aᵀ · b` without materializing the transpose.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix, LinalgError> {
    if a.rows() != b.rows() {
        return Err(LinalgError::DimensionMismatch {
            op: "matmul_tn",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let (m, n) = (a.cols(), b.cols());
    let mut c = Matrix::zeros(m, n);
    for k in 0..a.rows() {
        let arow = a.row(k);
        let brow = b.row(k);
        for (i, &aki) in arow.iter().enumerate() {
            let crow = c.row_mut(i);
            for (cij, &bkj) in crow.iter_mut().zip(brow) {
                *cij += aki * bkj;
            }
        }
    }
    Ok(c)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four independent partial sums; fixed order keeps results reproducible.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Normalized squared Frobenius error of the best rank-`r` approximation:
/// `Σ_{i>r} s_i² / x_norm²`.
///
/// `s` must be sorted descending. Returns 0 when `r` covers every value.
pub fn best_rank_error(singular_values: &[f64], r: usize, x_norm: f64) -> f64 {
    if r >= singular_values.len() {
        return 0.0;
    }
    let tail: f64 = singular_values[r..].iter().map(|s| s * s).sum();
    tail / (x_norm * x_norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn matmul_identity_and_zero() {
        let b = random(3, 4, 1);
        assert_eq!(matmul(&Matrix::identity(3), &b).unwrap(), b);
        let z = matmul(&b, &Matrix::zeros(4, 2)).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let a = random(4, 3, 2);
        let b = random(3, 2, 3);
        let c = matmul(&a, &b).unwrap();
        for i in 0..4 {
            for j in 0..2 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += a[(i, k)] * b[(k, j)];
                }
                assert!((c[(i, j)] - s).abs() <= 1e-15 * s.abs().max(f64::MIN_POSITIVE));
            }
        }
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap_err();
        assert!(matches!(err, LinalgError::DimensionMismatch { .. }));
    }

    #[test]
    fn matmul_tn_agrees_with_transpose() {
        let a = random(6, 3, 4);
        let b = random(6, 5, 5);
        let direct = matmul(&a.transpose(), &b).unwrap();
        let fused = matmul_tn(&a, &b).unwrap();
        assert!(direct.distance_sq(&fused).unwrap() < 1e-28);
    }

    #[test]
    fn best_rank_error_cases() {
        assert!((best_rank_error(&[3.0, 2.0, 1.0], 2, 14f64.sqrt()) - 1.0 / 14.0).abs() < 1e-15);
        assert_eq!(best_rank_error(&[1.0; 4], 2, 2.0), 0.5);
        assert_eq!(best_rank_error(&[3.0, 2.0, 1.0], 3, 1.0), 0.0);
        assert_eq!(best_rank_error(&[3.0, 2.0, 1.0], 7, 1.0), 0.0);
    }

    #[test]
    fn best_rank_error_matches_explicit_truncation() {
        let x = random(9, 6, 11);
        let svd = svd_dense(&x).unwrap();
        let xr = svd.reconstruct(3);
        let direct = x.distance_sq(&xr).unwrap() / x.frobenius_norm_sq();
        let formula = best_rank_error(&svd.singular_values, 3, x.frobenius_norm());
        assert!((direct - formula).abs() < 1e-12, "{direct} vs {formula}");
    }
}
