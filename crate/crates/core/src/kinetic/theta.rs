use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::collision::{collision_matrix, phase_weights};
use super::{MaxwellianTable, ScatteringKernel};

/// Solution of `Q_B(Θ) = -(p/m_n) 𝓜_n`, `Σ_n ∫ Θ_n dp = 0` at every axial
/// node, in the flat phase-space layout, with `D = Σ_n ∫ (p/m_n) Θ_n dp`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaField {
    pub theta: Vec<f64>,
    pub diffusion: Vec<f64>,
    /// Largest relative residual `‖Q_B Θ + v𝓜‖_∞ / ‖v𝓜‖_∞`.
    pub residual: f64,
}

const RESIDUAL_TOL: f64 = 1e-10;

/// Per-node bordered solve
///
/// ```text
/// [ Q_B  𝓜 ] [Θ]   [-v𝓜]
/// [ wᵀ   0 ] [μ] = [  0 ]
/// ```
///
/// The border column is the kernel of `Q_B` and the border row its left
/// kernel, which makes the system nonsingular. The multiplier `μ` vanishes
/// whenever the right-hand side is mean-free.
pub fn solve_theta(table: &MaxwellianTable, kernel: &ScatteringKernel) -> Result<ThetaField> {
    if kernel.is_off() {
        return Err(Error::InvalidArgument("the Θ problem needs a positive cross-section".into()));
    }
    kernel.validate(table.n_bands(), table.n_p())?;
    let n_p = table.n_p();
    let size = table.block();
    let p = table.momentum.nodes();
    let w = phase_weights(table);
    let mut theta = Vec::with_capacity(table.scripted.len());
    let mut diffusion = Vec::with_capacity(table.n_x());
    let mut residual: f64 = 0.0;
    for ix in 0..table.n_x() {
        let m = table.scripted_node(ix);
        let rhs: Vec<f64> = (0..size).map(|k| -p[k % n_p] / table.masses[k / n_p] * m[k]).collect();
        let mean: f64 = rhs.chunks(n_p).map(|b| table.momentum.integrate(b)).sum();
        let scale: f64 = rhs.iter().zip(&w).map(|(r, w)| (r * w).abs()).sum();
        if mean.abs() > 1e-12 * scale {
            return Err(Error::Solvability { defect: mean.abs() / scale });
        }
        let q = collision_matrix(table, kernel, ix);
        let mut bordered = DMatrix::zeros(size + 1, size + 1);
        bordered.view_mut((0, 0), (size, size)).copy_from(&q);
        for k in 0..size {
            bordered[(k, size)] = m[k];
            bordered[(size, k)] = w[k];
        }
        let mut b = DVector::from_vec(rhs.clone());
        b = b.push(0.0);
        let sol = bordered.lu().solve(&b).ok_or(Error::SingularSystem { row: size, pivot: 0.0 })?;
        let th = &sol.as_slice()[..size];
        let applied = &q * DVector::from_column_slice(th);
        let rhs_norm = rhs.iter().fold(0.0_f64, |a, r| a.max(r.abs()));
        let res = applied
            .iter()
            .zip(&rhs)
            .fold(0.0_f64, |a, (q, r)| a.max((q - r).abs()))
            / rhs_norm.max(f64::MIN_POSITIVE);
        residual = residual.max(res);
        let flux: Vec<f64> = (0..size).map(|k| p[k % n_p] / table.masses[k / n_p] * th[k]).collect();
        diffusion.push(flux.chunks(n_p).map(|b| table.momentum.integrate(b)).sum());
        theta.extend_from_slice(th);
    }
    if residual > RESIDUAL_TOL {
        return Err(Error::InvalidArgument(format!(
            "Θ solve residual {residual:.3e} exceeds {RESIDUAL_TOL:e}"
        )));
    }
    if let Some(d) = diffusion.iter().find(|d| !(**d >= 0.0)) {
        return Err(Error::InvalidArgument(format!("computed diffusion coefficient is negative: {d}")));
    }
    Ok(ThetaField {
        theta,
        diffusion,
        residual,
    })
}
