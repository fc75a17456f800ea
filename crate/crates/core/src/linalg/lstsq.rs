//! Linear least squares `min ‖aX − b‖_F` by Householder QR with column
//! pivoting, falling back to an SVD pseudo-inverse when `a` is numerically
//! rank deficient (minimum-Frobenius-norm solution).

use super::{axpy, dot, svd_dense, LinalgError, Matrix};

/// Singular values (or pivoted `|R_ii|`) below this fraction of the largest
/// are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LstsqSolution {
    pub x: Matrix,
    /// Numerical rank of `a`.
    pub rank: usize,
    /// True when the minimum-norm path was taken.
    pub rank_deficient: bool,
}

pub fn lstsq(a: &Matrix, b: &Matrix) -> Result<Matrix, LinalgError> {
    lstsq_detailed(a, b).map(|s| s.x)
}

pub fn lstsq_detailed(a: &Matrix, b: &Matrix) -> Result<LstsqSolution, LinalgError> {
    if a.rows() != b.rows() {
        return Err(LinalgError::DimensionMismatch {
            op: "lstsq",
            left: a.shape(),
            right: b.shape(),
        });
    }
    if a.rows() >= a.cols() {
        if let Some(x) = pivoted_qr_solve(a, b) {
            return Ok(LstsqSolution {
                x,
                rank: a.cols(),
                rank_deficient: false,
            });
        }
    }
    min_norm_svd_solve(a, b)
}

/// Returns `None` when a pivot falls below the rank tolerance.
fn pivoted_qr_solve(a: &Matrix, b: &Matrix) -> Option<Matrix> {
    let k = a.cols();
    let p = b.cols();
    let mut cols: Vec<Vec<f64>> = (0..k).map(|j| a.column(j)).collect();
    let mut rhs: Vec<Vec<f64>> = (0..p).map(|j| b.column(j)).collect();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut r_diag = vec![0.0f64; k];

    for j in 0..k {
        let pivot = (j..k)
            .max_by(|&x, &y| {
                let nx = dot(&cols[x][j..], &cols[x][j..]);
                let ny = dot(&cols[y][j..], &cols[y][j..]);
                nx.total_cmp(&ny).then(y.cmp(&x))
            })
            .unwrap();
        cols.swap(j, pivot);
        perm.swap(j, pivot);

        let norm = dot(&cols[j][j..], &cols[j][j..]).sqrt();
        if j == 0 && norm == 0.0 {
            return None;
        }
        if norm <= RANK_TOLERANCE * r_diag[0].abs() {
            return None;
        }
        let alpha = if cols[j][j] > 0.0 { -norm } else { norm };
        let mut v = cols[j][j..].to_vec();
        v[0] -= alpha;
        let vv = dot(&v, &v);
        r_diag[j] = alpha;
        if vv > 0.0 {
            let reflect = |target: &mut Vec<f64>| {
                let tail = &mut target[j..];
                let s = 2.0 * dot(&v, tail) / vv;
                axpy(-s, &v, tail);
            };
            cols.iter_mut().skip(j + 1).for_each(reflect);
            rhs.iter_mut().for_each(reflect);
        }
        cols[j][j] = alpha;
        cols[j][j + 1..].iter_mut().for_each(|x| *x = 0.0);
    }

    // Back substitution R·X̃ = (Qᵀb)[..k]; R[i][j] lives in cols[j][i].
    let mut x = Matrix::zeros(k, p);
    for c in 0..p {
        let mut sol = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = rhs[c][i];
            for jj in i + 1..k {
                s -= cols[jj][i] * sol[jj];
            }
            sol[i] = s / cols[i][i];
        }
        for (i, &orig) in perm.iter().enumerate() {
            x[(orig, c)] = sol[i];
        }
    }
    Some(x)
}

fn min_norm_svd_solve(a: &Matrix, b: &Matrix) -> Result<LstsqSolution, LinalgError> {
    let svd = svd_dense(a)?;
    let smax = svd.singular_values[0];
    let rank = svd
        .singular_values
        .iter()
        .take_while(|&&s| s > RANK_TOLERANCE * smax && s > 0.0)
        .count();
    let (m, k) = a.shape();
    let p = b.cols();
    // x = V_r Σ_r⁻¹ U_rᵀ b
    let mut coeff = Matrix::zeros(rank.max(1), p);
    for i in 0..rank {
        let inv = 1.0 / svd.singular_values[i];
        for c in 0..p {
            let mut s = 0.0;
            for row in 0..m {
                s += svd.left[(row, i)] * b[(row, c)];
            }
            coeff[(i, c)] = s * inv;
        }
    }
    let mut x = Matrix::zeros(k, p);
    for i in 0..rank {
        for j in 0..k {
            let vij = svd.right[(i, j)];
            for c in 0..p {
                x[(j, c)] += vij * coeff[(i, c)];
            }
        }
    }
    Ok(LstsqSolution {
        x,
        rank,
        rank_deficient: rank < k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{matmul, matmul_tn};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Gaussian elimination on the ridge-regularized normal equations.
    fn normal_equations_oracle(a: &Matrix, b: &Matrix, ridge: f64) -> Matrix {
        let k = a.cols();
        let mut g = matmul_tn(a, a).unwrap();
        for i in 0..k {
            g[(i, i)] += ridge;
        }
        let mut rhs = matmul_tn(a, b).unwrap();
        for col in 0..k {
            let piv = (col..k)
                .max_by(|&x, &y| g[(x, col)].abs().total_cmp(&g[(y, col)].abs()))
                .unwrap();
            for j in 0..k {
                let t = g[(col, j)];
                g[(col, j)] = g[(piv, j)];
                g[(piv, j)] = t;
            }
            for j in 0..rhs.cols() {
                let t = rhs[(col, j)];
                rhs[(col, j)] = rhs[(piv, j)];
                rhs[(piv, j)] = t;
            }
            for row in col + 1..k {
                let f = g[(row, col)] / g[(col, col)];
                for j in col..k {
                    g[(row, j)] -= f * g[(col, j)];
                }
                for j in 0..rhs.cols() {
                    rhs[(row, j)] -= f * rhs[(col, j)];
                }
            }
        }
        let mut x = Matrix::zeros(k, b.cols());
        for j in 0..b.cols() {
            for i in (0..k).rev() {
                let mut s = rhs[(i, j)];
                for jj in i + 1..k {
                    s -= g[(i, jj)] * x[(jj, j)];
                }
                x[(i, j)] = s / g[(i, i)];
            }
        }
        x
    }

    #[test]
    fn identity_system() {
        let b = random(4, 3, 1);
        let x = lstsq(&Matrix::identity(4), &b).unwrap();
        assert!(x.distance_sq(&b).unwrap() < 1e-28);
    }

    #[test]
    fn orthonormal_columns_project() {
        let q = svd_dense(&random(7, 3, 2)).unwrap().left;
        let b = random(7, 2, 3);
        let x = lstsq(&q, &b).unwrap();
        let proj = matmul_tn(&q, &b).unwrap();
        assert!(x.distance_sq(&proj).unwrap().sqrt() < 1e-13);
    }

    #[test]
    fn overdetermined_matches_normal_equations() {
        let a = random(8, 3, 4);
        let b = random(8, 2, 5);
        let x = lstsq(&a, &b).unwrap();
        let oracle = normal_equations_oracle(&a, &b, 1e-14);
        assert!(x.distance_sq(&oracle).unwrap().sqrt() < 1e-10);
    }

    #[test]
    fn residual_orthogonal_to_column_space() {
        let a = random(30, 6, 6);
        let b = random(30, 4, 7);
        let x = lstsq(&a, &b).unwrap();
        let resid = matmul(&a, &x).unwrap().sub(&b).unwrap();
        let g = matmul_tn(&a, &resid).unwrap();
        assert!(g.frobenius_norm() <= 1e-9 * a.frobenius_norm() * b.frobenius_norm());
    }

    #[test]
    fn rank_deficient_gives_minimum_norm() {
        // Two identical columns: minimizers form a line; the minimum-norm one
        // splits the weight evenly.
        let col: Vec<f64> = (0..6).map(|i| (i as f64 + 1.0).sin()).collect();
        let a = Matrix::from_fn(6, 2, |i, _| col[i]);
        let b = Matrix::from_fn(6, 1, |i, _| 2.0 * col[i]);
        let sol = lstsq_detailed(&a, &b).unwrap();
        assert!(sol.rank_deficient);
        assert_eq!(sol.rank, 1);
        assert!((sol.x[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((sol.x[(1, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn underdetermined_minimum_norm() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![2.0]]).unwrap();
        let sol = lstsq_detailed(&a, &b).unwrap();
        assert!(sol.rank_deficient);
        assert!((sol.x[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((sol.x[(1, 0)] - 1.0).abs() < 1e-14);
        assert!(sol.x[(2, 0)].abs() < 1e-14);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(lstsq(&Matrix::zeros(3, 2), &Matrix::zeros(4, 1)).is_err());
    }
}
