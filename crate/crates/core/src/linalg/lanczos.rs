//! Truncated SVD by Golub–Kahan–Lanczos bidiagonalization with full
//! reorthogonalization and thick restarts.
//!
//! The Krylov bases `P` (right, length n) and `Q` (left, length m) satisfy
//! `A·P = Q·B` with `B = Qᵀ·A·P` upper triangular (bidiagonal between
//! restarts), and `Aᵀ·Q = P·Bᵀ + f·e_kᵀ`. A Ritz triplet `(σ, Q·u_B, P·v_B)` of
//! `A` then has residual `‖f‖·|u_B[k-1]|`, which drives convergence. On restart
//! the leading Ritz vectors are kept and `f/‖f‖` becomes the next right vector.
//!
//! Each Lanczos step costs two matrix-vector products (`O(mn)`) plus
//! reorthogonalization (`O((m+n)·k)`); with a subspace of size `O(r)` the
//! whole solve is `O(mnr)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{axpy, dot, norm2, svd_dense, LinalgError, Matrix, SvdResult};

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    /// Convergence threshold on `residual / σ_max`.
    pub tol: f64,
    pub max_restarts: usize,
    /// Krylov subspace size; `None` picks `2r + 10` clamped to `min(m, n)`.
    pub subspace: Option<usize>,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_restarts: 300,
            subspace: None,
            seed: 0x5eed,
        }
    }
}

/// Top-`r` singular triplets of `x`, converged to `tol` relative residual.
pub fn svd_truncated(x: &Matrix, r: usize, tol: f64) -> Result<SvdResult, LinalgError> {
    svd_truncated_with(
        x,
        r,
        LanczosOptions {
            tol,
            ..LanczosOptions::default()
        },
    )
}

pub fn svd_truncated_with(
    x: &Matrix,
    r: usize,
    opts: LanczosOptions,
) -> Result<SvdResult, LinalgError> {
    let (m, n) = x.shape();
    let kmax = m.min(n);
    if r == 0 || r >= kmax {
        return Err(LinalgError::RankOutOfRange { rank: r, limit: kmax });
    }
    if !x.is_finite() {
        let pos = x.as_slice().iter().position(|v| !v.is_finite()).unwrap();
        return Err(LinalgError::NonFinite {
            row: pos / n,
            col: pos % n,
        });
    }
    let kdim = opts.subspace.unwrap_or(2 * r + 10).clamp(r + 1, kmax);
    let anorm = x.frobenius_norm();
    let breakdown = 1e-13 * anorm.max(f64::MIN_POSITIVE);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut p_basis: Vec<Vec<f64>> = Vec::with_capacity(kdim);
    let mut q_basis: Vec<Vec<f64>> = Vec::with_capacity(kdim);
    // Dense k×k projected matrix, row-major.
    let mut b = vec![0.0; kdim * kdim];
    p_basis.push(random_orthogonal(&mut rng, n, &[]));

    let mut start = 0;
    let mut w = vec![0.0; m];
    let mut z = vec![0.0; n];
    for restart in 0..=opts.max_restarts {
        let mut f = Vec::new();
        let mut fnorm = 0.0;
        for j in start..kdim {
            apply(x, &p_basis[j], &mut w);
            for _ in 0..2 {
                for (i, q) in q_basis.iter().enumerate() {
                    let c = dot(q, &w);
                    axpy(-c, q, &mut w);
                    b[i * kdim + j] += c;
                }
            }
            let alpha = norm2(&w);
            b[j * kdim + j] = alpha;
            let q = if alpha > breakdown {
                w.iter().map(|v| v / alpha).collect()
            } else {
                random_orthogonal(&mut rng, m, &q_basis)
            };
            q_basis.push(q);

            apply_transpose(x, &q_basis[j], &mut z);
            for _ in 0..2 {
                for p in &p_basis {
                    let d = dot(p, &z);
                    axpy(-d, p, &mut z);
                }
            }
            let beta = norm2(&z);
            if j + 1 < kdim {
                let p = if beta > breakdown {
                    z.iter().map(|v| v / beta).collect()
                } else {
                    random_orthogonal(&mut rng, n, &p_basis)
                };
                p_basis.push(p);
            } else {
                f = z.clone();
                fnorm = beta;
            }
        }

        let bmat = Matrix::from_vec(kdim, kdim, b.clone())?;
        let small = svd_dense(&bmat)?;
        let smax = small.singular_values[0].max(f64::MIN_POSITIVE);
        let converged = (0..r).all(|i| fnorm * small.left[(kdim - 1, i)].abs() <= opts.tol * smax);
        if converged || fnorm <= breakdown {
            return Ok(assemble(&q_basis, &p_basis, &small, r, m, n));
        }
        if restart == opts.max_restarts {
            break;
        }

        let keep = (r + (kdim - r) / 2).min(kdim - 1);
        let new_q: Vec<Vec<f64>> = (0..keep)
            .map(|i| combine(&q_basis, |j| small.left[(j, i)], m))
            .collect();
        let new_p: Vec<Vec<f64>> = (0..keep)
            .map(|i| combine(&p_basis, |j| small.right[(i, j)], n))
            .collect();
        q_basis = new_q;
        p_basis = new_p;
        b.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..keep {
            b[i * kdim + i] = small.singular_values[i];
        }
        let mut next: Vec<f64> = f.iter().map(|v| v / fnorm).collect();
        // Rounding drift in the restarted basis; one cleanup pass.
        for p in &p_basis {
            let d = dot(p, &next);
            axpy(-d, p, &mut next);
        }
        let nn = norm2(&next);
        next.iter_mut().for_each(|v| *v /= nn);
        p_basis.push(next);
        start = keep;
    }
    Err(LinalgError::NoConvergence {
        method: "Lanczos bidiagonalization",
        iterations: opts.max_restarts,
    })
}

fn assemble(
    q_basis: &[Vec<f64>],
    p_basis: &[Vec<f64>],
    small: &SvdResult,
    r: usize,
    m: usize,
    n: usize,
) -> SvdResult {
    let mut left = Matrix::zeros(m, r);
    let mut right = Matrix::zeros(r, n);
    for i in 0..r {
        left.set_column(i, &combine(q_basis, |j| small.left[(j, i)], m));
        right
            .row_mut(i)
            .copy_from_slice(&combine(p_basis, |j| small.right[(i, j)], n));
    }
    SvdResult {
        left,
        singular_values: small.singular_values[..r].to_vec(),
        right,
    }
}

fn combine(basis: &[Vec<f64>], coef: impl Fn(usize) -> f64, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (j, v) in basis.iter().enumerate() {
        axpy(coef(j), v, &mut out);
    }
    out
}

/// `out = x · v`.
fn apply(x: &Matrix, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(x.row(i), v);
    }
}

/// `out = xᵀ · u`.
fn apply_transpose(x: &Matrix, u: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (i, &ui) in u.iter().enumerate() {
        axpy(ui, x.row(i), out);
    }
}

fn random_orthogonal(rng: &mut ChaCha8Rng, len: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for _ in 0..2 {
            for q in basis {
                let d = dot(q, &v);
                axpy(-d, q, &mut v);
            }
        }
        let nrm = norm2(&v);
        if nrm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nrm);
            return v;
        }
    }
}
