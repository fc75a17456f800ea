//! Least-squares repair of network factors: refit one factor, or an `r × r`
//! core between them, with the rest held fixed.

use super::{normalized_loss, EvalError};
use crate::linalg::{lstsq_detailed, matmul, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct Calculated {
    pub loss: f64,
    /// The refitted factor (`Ũ`, `Ṽ` or `Σ̃`).
    pub factor: Matrix,
    /// A fixed factor was rank-deficient; `factor` is the minimum-norm
    /// minimizer.
    pub rank_deficient: bool,
}

fn check(x: &Matrix, rows: usize, cols: usize, what: &str) -> Result<(), EvalError> {
    if x.shape() != (rows, cols) {
        return Err(EvalError::ShapeMismatch(format!(
            "{what}: expected {rows}×{cols}, got {}×{}",
            x.rows(),
            x.cols()
        )));
    }
    Ok(())
}

/// `Ũ = argmin ‖X − Ũ V‖_F`, solved as `Vᵀ Ũᵀ ≈ Xᵀ`.
pub fn calculated_u(x: &Matrix, v: &Matrix) -> Result<Calculated, EvalError> {
    check(v, v.rows(), x.cols(), "V columns vs X columns")?;
    let sol = lstsq_detailed(&v.transpose(), &x.transpose())?;
    let u = sol.x.transpose();
    Ok(Calculated {
        loss: normalized_loss(x, &u, v)?,
        factor: u,
        rank_deficient: sol.rank_deficient,
    })
}

/// `Ṽ = argmin ‖X − U Ṽ‖_F`.
pub fn calculated_v(x: &Matrix, u: &Matrix) -> Result<Calculated, EvalError> {
    check(u, x.rows(), u.cols(), "U rows vs X rows")?;
    let sol = lstsq_detailed(u, x)?;
    Ok(Calculated {
        loss: normalized_loss(x, u, &sol.x)?,
        factor: sol.x,
        rank_deficient: sol.rank_deficient,
    })
}

/// `Σ̃ = argmin ‖X − U Σ̃ V‖_F = U⁺ X V⁺`, computed as two least-squares
/// solves.
pub fn calculated_sigma(x: &Matrix, u: &Matrix, v: &Matrix) -> Result<Calculated, EvalError> {
    check(u, x.rows(), u.cols(), "U rows vs X rows")?;
    check(v, u.cols(), x.cols(), "V vs U and X")?;
    let left = lstsq_detailed(u, x)?;
    let right = lstsq_detailed(&v.transpose(), &left.x.transpose())?;
    let sigma = right.x.transpose();
    let us = matmul(u, &sigma)?;
    Ok(Calculated {
        loss: normalized_loss(x, &us, v)?,
        factor: sigma,
        rank_deficient: left.rank_deficient || right.rank_deficient,
    })
}
