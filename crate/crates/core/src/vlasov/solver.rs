//! Strang-split semi-Lagrangian stepping for
//! `∂f/∂t + v ∂f/∂x + E ∂f/∂v = 0`.
//!
//! Each sub-step is a constant-shift 1D advection along one axis, evaluated
//! by 6-point (quintic) Lagrange interpolation at the foot of the
//! characteristic. Along `x` the shift wraps periodically; along `v`, values
//! traced from outside `[v_min, v_max]` are zero.

use super::{field_of, FieldState, PhaseSpaceGrid, SimError, TimeSeries};
use crate::linalg::Matrix;

const STENCIL: usize = 6;
/// Offset of the first stencil node relative to the floor of the foot point.
const FIRST_NODE: isize = -2;

/// Quintic Lagrange weights on nodes `-2..=3` evaluated at `theta ∈ [0, 1)`.
fn quintic_weights(theta: f64) -> [f64; STENCIL] {
    let mut w = [0.0; STENCIL];
    for (k, wk) in w.iter_mut().enumerate() {
        let xk = (k as isize + FIRST_NODE) as f64;
        let mut num = 1.0;
        let mut den = 1.0;
        for l in 0..STENCIL {
            if l == k {
                continue;
            }
            let xl = (l as isize + FIRST_NODE) as f64;
            num *= theta - xl;
            den *= xk - xl;
        }
        *wk = num / den;
    }
    w
}

/// Splits a shift (in cells) of the foot point `i - shift` into the integer
/// base offset and interpolation weights.
fn foot(shift: f64) -> (isize, [f64; STENCIL]) {
    let y = -shift;
    let base = y.floor();
    (base as isize, quintic_weights(y - base))
}

fn check_displacement(axis: &'static str, displacement: f64, domain: f64) -> Result<(), SimError> {
    if !displacement.is_finite() || displacement.abs() > 0.5 * domain {
        return Err(SimError::DisplacementTooLarge {
            axis,
            displacement,
            limit: 0.5 * domain,
        });
    }
    Ok(())
}

/// Free streaming over `tau`: `f(x, v) ← f(x − v·tau, v)`.
pub fn advect_x(f: &Matrix, grid: &PhaseSpaceGrid, tau: f64) -> Result<Matrix, SimError> {
    let (nx, nv) = (grid.nx, grid.nv);
    let dx = grid.dx();
    let mut feet = Vec::with_capacity(nv);
    for j in 0..nv {
        let disp = grid.v(j) * tau;
        check_displacement("x", disp, grid.length_x())?;
        feet.push(foot(disp / dx));
    }
    let mut out = Matrix::zeros(nx, nv);
    let n = nx as isize;
    for i in 0..nx {
        let row = out.row_mut(i);
        for (j, (base, w)) in feet.iter().enumerate() {
            let mut acc = 0.0;
            for (k, wk) in w.iter().enumerate() {
                let src = (i as isize + base + FIRST_NODE + k as isize).rem_euclid(n) as usize;
                acc += wk * f[(src, j)];
            }
            row[j] = acc;
        }
    }
    Ok(out)
}

/// Acceleration over `tau`: `f(x, v) ← f(x, v − E(x)·tau)`.
pub fn advect_v(
    f: &Matrix,
    grid: &PhaseSpaceGrid,
    e_field: &[f64],
    tau: f64,
) -> Result<Matrix, SimError> {
    let (nx, nv) = (grid.nx, grid.nv);
    let dv = grid.dv();
    let mut out = Matrix::zeros(nx, nv);
    for (i, &e) in e_field[..nx].iter().enumerate() {
        let disp = e * tau;
        check_displacement("v", disp, grid.v_max - grid.v_min)?;
        let (base, w) = foot(disp / dv);
        let src = f.row(i);
        let dst = out.row_mut(i);
        for (j, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, wk) in w.iter().enumerate() {
                let s = j as isize + base + FIRST_NODE + k as isize;
                if s >= 0 && (s as usize) < nv {
                    acc += wk * src[s as usize];
                }
            }
            *d = acc;
        }
    }
    Ok(out)
}

/// One Strang step: half `x`, Poisson, full `v`, half `x`. Returns the new
/// distribution and the mid-step field used for the velocity push.
pub fn step(f: &Matrix, dt: f64, grid: &PhaseSpaceGrid) -> Result<(Matrix, FieldState), SimError> {
    if f.shape() != (grid.nx, grid.nv) {
        return Err(SimError::ShapeMismatch {
            expected: (grid.nx, grid.nv),
            got: f.shape(),
        });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let half = advect_x(f, grid, 0.5 * dt)?;
    let field = field_of(&half, grid)?;
    let pushed = advect_v(&half, grid, &field.e_field, dt)?;
    let next = advect_x(&pushed, grid, 0.5 * dt)?;
    if !next.is_finite() {
        return Err(SimError::NonFinite);
    }
    Ok((next, field))
}

/// Integrates `steps` steps, recording the initial frame and every
/// `record_every`-th state together with its field energy.
pub fn run(
    ic: &Matrix,
    grid: &PhaseSpaceGrid,
    dt: f64,
    steps: usize,
    record_every: usize,
    ic_name: &str,
) -> Result<TimeSeries, SimError> {
    grid.validate()?;
    if record_every == 0 {
        return Err(SimError::InvalidParameter("record_every must be ≥ 1".into()));
    }
    let dx = grid.dx();
    let mut frames = vec![ic.clone()];
    let mut energy = vec![field_of(ic, grid)?.energy(dx)];
    let mut f = ic.clone();
    for s in 1..=steps {
        f = step(&f, dt, grid)
            .map_err(|e| SimError::AtStep {
                step: s,
                source: Box::new(e),
            })?
            .0;
        if s % record_every == 0 {
            energy.push(field_of(&f, grid)?.energy(dx));
            frames.push(f.clone());
        }
    }
    Ok(TimeSeries {
        grid: *grid,
        dt: dt * record_every as f64,
        frames,
        ic_name: ic_name.to_string(),
        field_energy: energy,
    })
}

/// `∫∫ f dx dv` by the midpoint rule.
pub fn total_mass(f: &Matrix, grid: &PhaseSpaceGrid) -> f64 {
    f.as_slice().iter().sum::<f64>() * grid.dx() * grid.dv()
}
