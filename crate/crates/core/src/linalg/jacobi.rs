//! Dense SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! Columns of the tall orientation are orthogonalized pairwise until every
//! pair has cosine below [`ORTH_TOL`]. A sweep costs `O(k²·l)` for `k` columns
//! of length `l`, so for `m ≤ n` one sweep is `O(m²n)` and a handful of sweeps
//! suffice in practice.

use super::{axpy, dot, norm2, LinalgError, Matrix, SvdResult};

const ORTH_TOL: f64 = 1e-15;
const MAX_SWEEPS: usize = 80;

/// Full thin SVD with `k = min(m, n)`.
pub fn svd_dense(x: &Matrix) -> Result<SvdResult, LinalgError> {
    if !x.is_finite() {
        let pos = x.as_slice().iter().position(|v| !v.is_finite()).unwrap();
        return Err(LinalgError::NonFinite {
            row: pos / x.cols(),
            col: pos % x.cols(),
        });
    }
    let (m, n) = x.shape();
    if m >= n {
        let cols: Vec<Vec<f64>> = (0..n).map(|j| x.column(j)).collect();
        let (u, s, v) = jacobi_columns(cols)?;
        // x = U Σ Vᵀ, with V's columns stored as vectors.
        Ok(SvdResult {
            left: columns_to_matrix(&u, m),
            singular_values: s,
            right: rows_to_matrix(&v, n),
        })
    } else {
        let cols: Vec<Vec<f64>> = (0..m).map(|i| x.row(i).to_vec()).collect();
        let (u, s, v) = jacobi_columns(cols)?;
        // xᵀ = U Σ Vᵀ  ⇒  x = V Σ Uᵀ.
        Ok(SvdResult {
            left: columns_to_matrix(&v, m),
            singular_values: s,
            right: rows_to_matrix(&u, n),
        })
    }
}

type Columns = Vec<Vec<f64>>;

/// Orthogonalizes `cols` in place. Returns (normalized columns, singular
/// values, accumulated right rotations as columns), sorted descending.
fn jacobi_columns(mut w: Columns) -> Result<(Columns, Vec<f64>, Columns), LinalgError> {
    let k = w.len();
    let len = w[0].len();
    let mut v: Columns = (0..k)
        .map(|j| {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut converged = k < 2;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(LinalgError::NoConvergence {
                method: "one-sided Jacobi SVD",
                iterations: sweeps,
            });
        }
        sweeps += 1;
        converged = true;
        for p in 0..k - 1 {
            for q in p + 1..k {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= ORTH_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
    }

    let mut sigma: Vec<f64> = w.iter().map(|c| norm2(c)).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));

    let mut u_sorted = Vec::with_capacity(k);
    let mut v_sorted = Vec::with_capacity(k);
    let mut s_sorted = Vec::with_capacity(k);
    for &j in &order {
        let s = sigma[j];
        let col = std::mem::take(&mut w[j]);
        u_sorted.push(if s > f64::MIN_POSITIVE * 1e10 {
            col.into_iter().map(|x| x / s).collect()
        } else {
            Vec::new()
        });
        v_sorted.push(std::mem::take(&mut v[j]));
        s_sorted.push(s);
    }
    sigma.clear();
    complete_orthonormal(&mut u_sorted, len);
    Ok((u_sorted, s_sorted, v_sorted))
}

fn rotate(cols: &mut Columns, p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let a = &mut lo[p];
    let b = &mut hi[0];
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Replaces empty columns (zero singular values) with unit vectors
/// orthogonal to everything else, so the basis stays orthonormal.
fn complete_orthonormal(cols: &mut Columns, len: usize) {
    let mut candidate = 0;
    for j in 0..cols.len() {
        if !cols[j].is_empty() {
            continue;
        }
        loop {
            assert!(candidate < len, "cannot complete orthonormal basis");
            let mut e = vec![0.0; len];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for other in cols.iter().filter(|c| !c.is_empty()) {
                    let d = dot(other, &e);
                    axpy(-d, other, &mut e);
                }
            }
            let nrm = norm2(&e);
            if nrm > 0.5 {
                e.iter_mut().for_each(|x| *x /= nrm);
                cols[j] = e;
                break;
            }
        }
    }
}

fn columns_to_matrix(cols: &Columns, rows: usize) -> Matrix {
    Matrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

fn rows_to_matrix(rows: &Columns, cols: usize) -> Matrix {
    Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::matmul_tn;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn orthonormality_defect(q: &Matrix) -> f64 {
        let g = matmul_tn(q, q).unwrap();
        g.distance_sq(&Matrix::identity(g.rows())).unwrap().sqrt()
    }

    #[test]
    fn diagonal_singular_values() {
        let svd = svd_dense(&Matrix::diag(&[3.0, 2.0, 1.0])).unwrap();
        for (s, e) in svd.singular_values.iter().zip([3.0, 2.0, 1.0]) {
            assert!((s - e).abs() < 1e-15);
        }
        // Unsorted diagonal comes back sorted.
        let svd = svd_dense(&Matrix::diag(&[1.0, 3.0, 2.0])).unwrap();
        assert_eq!(svd.singular_values, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn rank_one_outer_product() {
        let u = [1.0, -2.0, 0.5, 3.0];
        let v = [2.0, 1.0, -1.0];
        let x = Matrix::from_fn(4, 3, |i, j| u[i] * v[j]);
        let svd = svd_dense(&x).unwrap();
        let expected = norm2(&u) * norm2(&v);
        assert!((svd.singular_values[0] - expected).abs() < 1e-13 * expected);
        assert!(svd.singular_values[1..].iter().all(|&s| s < 1e-14 * expected));
        assert!(orthonormality_defect(&svd.left) < 1e-12);
        assert!(orthonormality_defect(&svd.right.transpose()) < 1e-12);
    }

    #[test]
    fn zero_matrix_gets_complete_basis() {
        let svd = svd_dense(&Matrix::zeros(5, 3)).unwrap();
        assert_eq!(svd.singular_values, vec![0.0; 3]);
        assert!(orthonormality_defect(&svd.left) < 1e-14);
    }

    #[test]
    fn random_tall_and_wide() {
        for (m, n, seed) in [(10, 7, 1), (7, 10, 2), (1, 5, 3), (5, 1, 4), (16, 16, 5)] {
            let x = random(m, n, seed);
            let svd = svd_dense(&x).unwrap();
            let k = m.min(n);
            assert_eq!(svd.left.shape(), (m, k));
            assert_eq!(svd.right.shape(), (k, n));
            assert!(orthonormality_defect(&svd.left) < 1e-10);
            assert!(orthonormality_defect(&svd.right.transpose()) < 1e-10);
            let err = x.distance_sq(&svd.reconstruct(k)).unwrap().sqrt();
            assert!(err < 1e-12 * x.frobenius_norm(), "{m}x{n}: {err}");
            assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rejects_non_finite() {
        let mut x = Matrix::zeros(3, 3);
        x.as_mut_slice()[4] = f64::INFINITY;
        assert!(matches!(svd_dense(&x), Err(LinalgError::NonFinite { row: 1, col: 1 })));
    }

    #[test]
    fn singular_values_match_gram_eigen_trace() {
        // Σ s_i² = ‖x‖²_F.
        let x = random(12, 9, 9);
        let svd = svd_dense(&x).unwrap();
        let sum: f64 = svd.singular_values.iter().map(|s| s * s).sum();
        assert!((sum - x.frobenius_norm_sq()).abs() < 1e-12 * sum);
    }
}
