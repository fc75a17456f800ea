//! Initial distributions sampled at cell centers.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PhaseSpaceGrid, SimError};
use crate::linalg::Matrix;

/// Named initial-condition families with their parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialCondition {
    LandauStrong { alpha: f64, k: f64 },
    TwoStream { alpha: f64, k: f64, v0: f64 },
    RandomSmooth { seed: u64, smooth_scale: f64 },
}

impl InitialCondition {
    pub const NAMES: [&'static str; 3] = ["landau-strong", "two-stream", "random-smooth"];

    pub fn landau_strong() -> Self {
        Self::LandauStrong { alpha: 0.5, k: 0.5 }
    }

    pub fn two_stream() -> Self {
        Self::TwoStream {
            alpha: 0.05,
            k: 0.5,
            v0: 2.4,
        }
    }

    pub fn random_smooth(seed: u64) -> Self {
        Self::RandomSmooth {
            seed,
            smooth_scale: 4.0,
        }
    }

    /// Default parameters for a family name.
    pub fn from_name(name: &str) -> Result<Self, SimError> {
        match name {
            "landau-strong" => Ok(Self::landau_strong()),
            "two-stream" => Ok(Self::two_stream()),
            "random-smooth" => Ok(Self::random_smooth(0)),
            other => Err(SimError::UnknownInitialCondition(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::LandauStrong { .. } => "landau-strong",
            Self::TwoStream { .. } => "two-stream",
            Self::RandomSmooth { .. } => "random-smooth",
        }
    }

    pub fn sample(&self, grid: &PhaseSpaceGrid) -> Result<Matrix, SimError> {
        match *self {
            Self::LandauStrong { alpha, k } => init_landau_strong(grid, alpha, k),
            Self::TwoStream { alpha, k, v0 } => init_two_stream(grid, alpha, k, v0),
            Self::RandomSmooth { seed, smooth_scale } => {
                init_random_smooth(grid, seed, smooth_scale)
            }
        }
    }
}

/// `f = (1/√(2π))·(1 + α cos kx)·exp(−v²/2)`.
pub fn init_landau_strong(grid: &PhaseSpaceGrid, alpha: f64, k: f64) -> Result<Matrix, SimError> {
    grid.validate()?;
    let norm = 1.0 / (2.0 * PI).sqrt();
    let xs = grid.xs();
    let maxwell: Vec<f64> = grid.vs().iter().map(|v| norm * (-0.5 * v * v).exp()).collect();
    Ok(Matrix::from_fn(grid.nx, grid.nv, |i, j| {
        (1.0 + alpha * (k * xs[i]).cos()) * maxwell[j]
    }))
}

/// `f = (1/(2√(2π)))·[exp(−(v−v₀)²/2) + exp(−(v+v₀)²/2)]·(1 + α cos kx)`.
pub fn init_two_stream(
    grid: &PhaseSpaceGrid,
    alpha: f64,
    k: f64,
    v0: f64,
) -> Result<Matrix, SimError> {
    grid.validate()?;
    let norm = 1.0 / (2.0 * (2.0 * PI).sqrt());
    let xs = grid.xs();
    let beams: Vec<f64> = grid
        .vs()
        .iter()
        .map(|v| norm * ((-0.5 * (v - v0).powi(2)).exp() + (-0.5 * (v + v0).powi(2)).exp()))
        .collect();
    Ok(Matrix::from_fn(grid.nx, grid.nv, |i, j| {
        beams[j] * (1.0 + alpha * (k * xs[i]).cos())
    }))
}

/// Uniform noise smoothed by a periodic Gaussian of width `smooth_scale`
/// cells (separably along both axes), scaled to unit mean density.
pub fn init_random_smooth(
    grid: &PhaseSpaceGrid,
    seed: u64,
    smooth_scale: f64,
) -> Result<Matrix, SimError> {
    grid.validate()?;
    if smooth_scale.is_nan() || smooth_scale <= 0.0 {
        return Err(SimError::InvalidParameter(format!(
            "smooth_scale must be positive, got {smooth_scale}"
        )));
    }
    let (nx, nv) = (grid.nx, grid.nv);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..nx * nv).map(|_| rng.gen::<f64>()).collect();

    let kx = periodic_gaussian(nx, smooth_scale);
    let kv = periodic_gaussian(nv, smooth_scale);
    let mut along_v = vec![0.0; nx * nv];
    for i in 0..nx {
        for j in 0..nv {
            let mut acc = 0.0;
            for (d, w) in kv.iter().enumerate() {
                acc += w * noise[i * nv + (j + d) % nv];
            }
            along_v[i * nv + j] = acc;
        }
    }
    let mut smooth = vec![0.0; nx * nv];
    for i in 0..nx {
        for j in 0..nv {
            let mut acc = 0.0;
            for (d, w) in kx.iter().enumerate() {
                acc += w * along_v[((i + d) % nx) * nv + j];
            }
            smooth[i * nv + j] = acc;
        }
    }
    // Nonnegative already (positive kernel on [0,1) noise); fix the mean
    // density ∫f dv to one.
    let mean = smooth.iter().sum::<f64>() / (nx * nv) as f64;
    let scale = 1.0 / (mean * (grid.v_max - grid.v_min));
    smooth.iter_mut().for_each(|v| *v *= scale);
    Ok(Matrix::from_vec(nx, nv, smooth)?)
}

/// Normalized weights `w[d]` for periodic offset `d`, using the shorter
/// wrap-around distance.
fn periodic_gaussian(n: usize, sigma: f64) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n)
        .map(|d| {
            let dist = d.min(n - d) as f64;
            (-0.5 * (dist / sigma).powi(2)).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vlasov::{charge_density, field_of};

    #[test]
    fn landau_nonnegative_and_uniform_without_perturbation() {
        let grid = PhaseSpaceGrid::standard(32, 64);
        let f = init_landau_strong(&grid, 0.5, 0.5).unwrap();
        assert!(f.as_slice().iter().all(|&v| v >= 0.0));
        let f0 = init_landau_strong(&grid, 0.0, 0.5).unwrap();
        assert!(field_of(&f0, &grid).unwrap().max_abs_e() < 1e-14);
    }

    #[test]
    fn landau_density_profile() {
        let grid = PhaseSpaceGrid::standard(64, 128);
        let f = init_landau_strong(&grid, 0.5, 0.5).unwrap();
        let rho = charge_density(&f, &grid).unwrap();
        // Fourier coefficient of cos(kx) over one period.
        let xs = grid.xs();
        let a1: f64 = rho
            .iter()
            .zip(&xs)
            .map(|(r, x)| r * (0.5 * x).cos())
            .sum::<f64>()
            * 2.0
            / 64.0;
        assert!((a1 - 0.5).abs() < 1e-6, "{a1}");
    }

    #[test]
    fn two_stream_even_in_velocity() {
        let grid = PhaseSpaceGrid::standard(16, 64);
        let f = init_two_stream(&grid, 0.05, 0.5, 2.4).unwrap();
        for i in 0..16 {
            for j in 0..64 {
                assert!((f[(i, j)] - f[(i, 63 - j)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn random_smooth_is_deterministic_and_normalized() {
        let grid = PhaseSpaceGrid::standard(32, 64);
        let a = init_random_smooth(&grid, 3, 2.0).unwrap();
        let b = init_random_smooth(&grid, 3, 2.0).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        let c = init_random_smooth(&grid, 4, 2.0).unwrap();
        assert_ne!(a.as_slice(), c.as_slice());
        assert!(a.as_slice().iter().all(|&v| v >= 0.0));
        let rho = charge_density(&a, &grid).unwrap();
        let mean = rho.iter().sum::<f64>() / 32.0;
        assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_smooth_wide_kernel_is_nearly_constant() {
        let grid = PhaseSpaceGrid::standard(16, 32);
        let f = init_random_smooth(&grid, 9, 1e6).unwrap();
        let (lo, hi) = f
            .as_slice()
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        assert!((hi - lo) / hi < 1e-9);
        assert!(init_random_smooth(&grid, 9, 0.0).is_err());
    }

    #[test]
    fn names_round_trip() {
        for name in InitialCondition::NAMES {
            assert_eq!(InitialCondition::from_name(name).unwrap().name(), name);
        }
        assert!(InitialCondition::from_name("bump-on-tail").is_err());
    }
}
