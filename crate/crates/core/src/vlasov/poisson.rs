//! Periodic spectral Poisson solve `−φ'' = ρ − ρ₀`, `E = −φ'`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{PhaseSpaceGrid, SimError};
use crate::linalg::Matrix;

/// Self-consistent field on the spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub rho: Vec<f64>,
    /// Neutralizing background, the spatial mean of `rho`.
    pub rho0: f64,
    /// Zero-mean potential.
    pub phi: Vec<f64>,
    pub e_field: Vec<f64>,
}

impl FieldState {
    /// `½ ∫ E² dx` by the periodic rectangle rule.
    pub fn energy(&self, dx: f64) -> f64 {
        0.5 * self.e_field.iter().map(|e| e * e).sum::<f64>() * dx
    }

    pub fn max_abs_e(&self) -> f64 {
        self.e_field.iter().fold(0.0, |m, e| m.max(e.abs()))
    }
}

/// `ρ(x_i) = Σ_j f(x_i, v_j)·dv`.
pub fn charge_density(f: &Matrix, grid: &PhaseSpaceGrid) -> Result<Vec<f64>, SimError> {
    if f.shape() != (grid.nx, grid.nv) {
        return Err(SimError::ShapeMismatch {
            expected: (grid.nx, grid.nv),
            got: f.shape(),
        });
    }
    let dv = grid.dv();
    Ok((0..grid.nx)
        .map(|i| f.row(i).iter().sum::<f64>() * dv)
        .collect())
}

pub fn poisson_solve(rho: &[f64], grid: &PhaseSpaceGrid) -> Result<FieldState, SimError> {
    let n = grid.nx;
    if rho.len() != n {
        return Err(SimError::ShapeMismatch {
            expected: (n, 1),
            got: (rho.len(), 1),
        });
    }
    let rho0 = rho.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex64> = rho.iter().map(|&r| Complex64::new(r - rho0, 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);

    let length = grid.length_x();
    let mut phi_hat = vec![Complex64::new(0.0, 0.0); n];
    let mut e_hat = vec![Complex64::new(0.0, 0.0); n];
    for k in 1..n {
        // Nyquist mode has no well-defined odd derivative; drop it from E.
        let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        let kappa = 2.0 * PI * signed / length;
        let ph = buf[k] / (kappa * kappa);
        phi_hat[k] = ph;
        if !(n.is_multiple_of(2) && k == n / 2) {
            e_hat[k] = Complex64::new(0.0, -kappa) * ph;
        }
    }
    let inverse = planner.plan_fft_inverse(n);
    inverse.process(&mut phi_hat);
    inverse.process(&mut e_hat);
    let scale = 1.0 / n as f64;
    Ok(FieldState {
        rho: rho.to_vec(),
        rho0,
        phi: phi_hat.iter().map(|c| c.re * scale).collect(),
        e_field: e_hat.iter().map(|c| c.re * scale).collect(),
    })
}

/// Field of a full snapshot.
pub fn field_of(f: &Matrix, grid: &PhaseSpaceGrid) -> Result<FieldState, SimError> {
    poisson_solve(&charge_density(f, grid)?, grid)
}
