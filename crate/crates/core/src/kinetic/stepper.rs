use crate::error::{Error, Result};

use super::collision::implicit_collision;
use super::{BoundaryPolicy, DistributionFunction, KineticConfig, MaxwellianTable};

/// Largest step for which the explicit upwind transport is a convex
/// combination of neighbouring values:
/// `dt (max|v|/h_x + max|∂_x V_nn|/h_p) / η ≤ 1`.
pub fn cfl_limit(table: &MaxwellianTable, eta: f64) -> f64 {
    let rate = table.max_velocity() / table.axial.h() + table.max_force() / table.momentum.h_p();
    eta / rate
}

/// One IMEX step of the scaled BGK equation.
///
/// Transport in `x` and `p` is explicit first-order upwind; the stiff
/// `η⁻²` collision term is implicit. The result is checked for negative
/// nodes, which abort the step instead of being clipped.
pub fn advance_boltzmann(
    f: &DistributionFunction,
    table: &MaxwellianTable,
    config: &KineticConfig,
    dt: f64,
) -> Result<DistributionFunction> {
    f.check_shape(table)?;
    config.validate(table.n_bands())?;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let eta = config.eta;
    let limit = cfl_limit(table, eta);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt, limit });
    }
    let (n_x, nb, n_p) = (f.n_x, f.n_bands, f.n_p);
    let p = table.momentum.nodes();
    let (hx, hp) = (table.axial.h(), table.momentum.h_p());
    let periodic = config.boundary == BoundaryPolicy::Periodic;
    let at = |ix: isize, n: usize, j: usize| -> f64 {
        if ix < 0 || ix >= n_x as isize {
            if periodic {
                f.values[f.index(ix.rem_euclid(n_x as isize) as usize, n, j)]
            } else {
                0.0
            }
        } else {
            f.values[f.index(ix as usize, n, j)]
        }
    };
    let mut star = f.clone();
    for ix in 0..n_x {
        let i = ix as isize;
        for n in 0..nb {
            let a = table.force[ix][n];
            for j in 0..n_p {
                let v = p[j] / table.masses[n];
                let here = at(i, n, j);
                let dx = if v > 0.0 { here - at(i - 1, n, j) } else { at(i + 1, n, j) - here };
                let dp = if a > 0.0 {
                    here - if j > 0 { at(i, n, j - 1) } else { 0.0 }
                } else {
                    (if j + 1 < n_p { at(i, n, j + 1) } else { 0.0 }) - here
                };
                star.values[f.index(ix, n, j)] = here - dt / eta * (v * dx / hx + a * dp / hp);
            }
        }
    }
    let mut next = implicit_collision(&star, table, &config.kernel, dt / (eta * eta))?;
    next.time = f.time + dt;
    next.check_nonnegative()?;
    Ok(next)
}
