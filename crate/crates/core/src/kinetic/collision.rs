use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::{DistributionFunction, MaxwellianTable, ScatteringKernel};

/// Momentum weights repeated for every band.
pub(crate) fn phase_weights(table: &MaxwellianTable) -> Vec<f64> {
    let w = table.momentum.weights();
    (0..table.n_bands()).flat_map(|_| w.iter().copied()).collect()
}

/// `∫ 𝓜_n dp` per band at one node.
fn band_masses(table: &MaxwellianTable, ix: usize) -> Vec<f64> {
    table.scripted_node(ix).chunks(table.n_p()).map(|b| table.momentum.integrate(b)).collect()
}

fn band_densities(table: &MaxwellianTable, node: &[f64]) -> Vec<f64> {
    node.chunks(table.n_p()).map(|b| table.momentum.integrate(b)).collect()
}

fn apply_node(table: &MaxwellianTable, kernel: &ScatteringKernel, ix: usize, f: &[f64], out: &mut [f64]) {
    let n_p = table.n_p();
    let m = table.scripted_node(ix);
    match kernel {
        ScatteringKernel::Off => out.fill(0.0),
        ScatteringKernel::Constant { tau } => {
            let density: f64 = band_densities(table, f).iter().sum();
            let m0 = table.mass[ix];
            for k in 0..f.len() {
                out[k] = (m[k] * density - f[k] * m0) / tau;
            }
        }
        ScatteringKernel::BandMatrix { alpha } => {
            let densities = band_densities(table, f);
            let masses = band_masses(table, ix);
            for (n, row) in alpha.iter().enumerate() {
                let gain: f64 = row.iter().zip(&densities).map(|(a, d)| a * d).sum();
                let loss: f64 = row.iter().zip(&masses).map(|(a, d)| a * d).sum();
                for j in 0..n_p {
                    let k = j + n_p * n;
                    out[k] = m[k] * gain - f[k] * loss;
                }
            }
        }
        ScatteringKernel::Tabulated { alpha } => {
            let w = phase_weights(table);
            for (i, row) in alpha.iter().enumerate() {
                let mut gain = 0.0;
                let mut loss = 0.0;
                for j in 0..f.len() {
                    gain += w[j] * row[j] * f[j];
                    loss += w[j] * row[j] * m[j];
                }
                out[i] = m[i] * gain - f[i] * loss;
            }
        }
    }
}

/// Discrete `Q_B(f)`: gain and loss share the same momentum quadrature, so
/// `Σ_n ∫ Q_B(f)_n dp` vanishes up to roundoff at every node.
pub fn collision_apply(
    f: &DistributionFunction,
    table: &MaxwellianTable,
    kernel: &ScatteringKernel,
) -> Result<DistributionFunction> {
    f.check_shape(table)?;
    let mut out = DistributionFunction::zeros(f.n_x, f.n_bands, f.n_p);
    out.time = f.time;
    let b = table.block();
    for ix in 0..f.n_x {
        apply_node(table, kernel, ix, f.node(ix), &mut out.values[ix * b..(ix + 1) * b]);
    }
    Ok(out)
}

/// Dense matrix of `Q_B` at one axial node.
pub fn collision_matrix(table: &MaxwellianTable, kernel: &ScatteringKernel, ix: usize) -> DMatrix<f64> {
    let n_p = table.n_p();
    let size = table.block();
    let m = table.scripted_node(ix);
    let w = phase_weights(table);
    let alpha = kernel.dense(table.n_bands(), n_p);
    let mut k = DMatrix::zeros(size, size);
    for i in 0..size {
        let mut loss = 0.0;
        for j in 0..size {
            k[(i, j)] = m[i] * w[j] * alpha[(i, j)];
            loss += w[j] * alpha[(i, j)] * m[j];
        }
        k[(i, i)] -= loss;
    }
    k
}

/// Eigenvalues of `Q_B` at one node in decreasing order.
///
/// `Q_B` is self-adjoint for `Σ w f g / 𝓜`, so the similarity with
/// `diag(√(w/𝓜))` gives a symmetric matrix with the same spectrum.
pub fn ritz_values(table: &MaxwellianTable, kernel: &ScatteringKernel, ix: usize) -> Vec<f64> {
    let k = collision_matrix(table, kernel, ix);
    let m = table.scripted_node(ix);
    let w = phase_weights(table);
    let s: Vec<f64> = w.iter().zip(m).map(|(w, m)| (w / m).sqrt()).collect();
    let n = k.nrows();
    let sym = DMatrix::from_fn(n, n, |i, j| {
        let a = s[i] * k[(i, j)] / s[j];
        let b = s[j] * k[(j, i)] / s[i];
        0.5 * (a + b)
    });
    let mut values: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

pub(crate) fn weighted_inner_node(table: &MaxwellianTable, ix: usize, a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    let m = table.scripted_node(ix);
    (0..a.len()).map(|k| w[k] * a[k] * b[k] / m[k]).sum()
}

/// `⟨f, g⟩_𝓜 = ∫ Σ_n ∫ f_n g_n / 𝓜_n dp dx` with trapezoid weights in x.
pub fn weighted_inner(f: &DistributionFunction, g: &DistributionFunction, table: &MaxwellianTable) -> Result<f64> {
    f.check_shape(table)?;
    g.check_shape(table)?;
    let w = phase_weights(table);
    let wx = table.axial.weights();
    Ok((0..f.n_x)
        .map(|ix| wx[ix] * weighted_inner_node(table, ix, f.node(ix), g.node(ix), &w))
        .sum())
}

pub fn weighted_norm(f: &DistributionFunction, table: &MaxwellianTable) -> Result<f64> {
    Ok(weighted_inner(f, f, table)?.sqrt())
}

/// `P(f)`: the `⟨·,·⟩_𝓜`-orthogonal projection onto `N 𝓜`. It keeps the
/// density moment of `f`.
pub fn kernel_projection(f: &DistributionFunction, table: &MaxwellianTable) -> Result<DistributionFunction> {
    f.check_shape(table)?;
    let mut out = f.clone();
    let b = table.block();
    for ix in 0..f.n_x {
        let density: f64 = band_densities(table, f.node(ix)).iter().sum();
        let scale = density / table.mass[ix];
        for (o, m) in out.values[ix * b..(ix + 1) * b].iter_mut().zip(table.scripted_node(ix)) {
            *o = scale * m;
        }
    }
    Ok(out)
}

/// Solves `(I - θ Q_B) f = f*` node by node.
///
/// Constant and band-matrix kernels reduce to a band-sized system for the
/// densities because the operator conserves them; tabulated kernels use a
/// dense LU. Every variant is an M-matrix, so `f* ≥ 0` gives `f ≥ 0`.
pub fn implicit_collision(
    f_star: &DistributionFunction,
    table: &MaxwellianTable,
    kernel: &ScatteringKernel,
    theta: f64,
) -> Result<DistributionFunction> {
    f_star.check_shape(table)?;
    let mut out = f_star.clone();
    let b = table.block();
    let n_p = table.n_p();
    for ix in 0..f_star.n_x {
        let src = f_star.node(ix);
        let dst = &mut out.values[ix * b..(ix + 1) * b];
        let m = table.scripted_node(ix);
        match kernel {
            ScatteringKernel::Off => {}
            ScatteringKernel::Constant { tau } => {
                let density: f64 = band_densities(table, src).iter().sum();
                let c = theta / tau;
                let denom = 1.0 + c * table.mass[ix];
                for k in 0..b {
                    dst[k] = (src[k] + c * m[k] * density) / denom;
                }
            }
            ScatteringKernel::BandMatrix { alpha } => {
                let nb = alpha.len();
                let masses = band_masses(table, ix);
                let lambda: Vec<f64> = alpha
                    .iter()
                    .map(|row| row.iter().zip(&masses).map(|(a, m)| a * m).sum())
                    .collect();
                let system = DMatrix::from_fn(nb, nb, |n, n2| {
                    let diag = if n == n2 { 1.0 + theta * lambda[n] } else { 0.0 };
                    diag - theta * masses[n] * alpha[n][n2]
                });
                let rhs = DVector::from_vec(band_densities(table, src));
                let densities = system.lu().solve(&rhs).ok_or(Error::SingularSystem { row: 0, pivot: 0.0 })?;
                for (n, row) in alpha.iter().enumerate() {
                    let gain: f64 = row.iter().zip(densities.iter()).map(|(a, d)| a * d).sum();
                    for j in 0..n_p {
                        let k = j + n_p * n;
                        dst[k] = (src[k] + theta * m[k] * gain) / (1.0 + theta * lambda[n]);
                    }
                }
            }
            ScatteringKernel::Tabulated { .. } => {
                let system = DMatrix::identity(b, b) - collision_matrix(table, kernel, ix) * theta;
                let rhs = DVector::from_column_slice(src);
                let sol = system.lu().solve(&rhs).ok_or(Error::SingularSystem { row: 0, pivot: 0.0 })?;
                dst.copy_from_slice(sol.as_slice());
            }
        }
    }
    Ok(out)
}
