//! Cell eigenproblem and the device-independent band quantities.
//!
//! The Hamiltonian `-½Δ + W` lives on the unit cell, periodic along the wire
//! and Dirichlet on the cross-section boundary. From its lowest eigenpairs we
//! extract the gradient matrix elements `P`, the band effective masses and
//! the confinement densities `g_n(z) = ∫ χ_n² dy`.

mod hamiltonian;
mod lanczos;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grids::{periodic_derivative_y, CrossSection, UnitCellGrid};
use crate::linalg::{conjugate_gradient, CgOptions};

pub use hamiltonian::{assemble_hamiltonian, Hamiltonian};
pub use lanczos::{lowest_eigenpairs, EigenOptions, EigenPair};

use hamiltonian::TensorInverse;

/// Samples of the nonnegative lattice potential on the unit-cell unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticePotential {
    grid: UnitCellGrid,
    samples: Vec<f64>,
    sup_norm: f64,
}

impl LatticePotential {
    pub fn new(grid: &UnitCellGrid, samples: Vec<f64>) -> Result<Self> {
        check_len("lattice potential", grid.unknowns(), samples.len())?;
        if let Some((k, w)) = samples.iter().enumerate().find(|(_, w)| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::AssumptionViolated(format!(
                "lattice potential must be finite and nonnegative (violates Assumption 1.1); found {w} at unknown {k}"
            )));
        }
        let sup_norm = samples.iter().fold(0.0_f64, |m, w| m.max(*w));
        Ok(Self {
            grid: grid.clone(),
            samples,
            sup_norm,
        })
    }

    pub fn from_fn(grid: &UnitCellGrid, f: impl Fn(f64, f64, f64) -> f64) -> Result<Self> {
        let [m1, m2] = grid.interior();
        let mut samples = vec![0.0; grid.unknowns()];
        for j2 in 0..m2 {
            for j1 in 0..m1 {
                for iy in 0..grid.n_y {
                    let [y, z1, z2] = grid.coordinates(iy, j1, j2);
                    samples[grid.index(iy, j1, j2)] = f(y, z1, z2);
                }
            }
        }
        Self::new(grid, samples)
    }

    pub fn constant(grid: &UnitCellGrid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.unknowns()])
    }

    pub fn grid(&self) -> &UnitCellGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }
}

/// Lowest eigenpairs of the cell Hamiltonian.
#[derive(Debug, Clone)]
pub struct BlochSpectrum {
    pub grid: UnitCellGrid,
    pub potential_sup: f64,
    /// Nondecreasing.
    pub energies: Vec<f64>,
    /// Normalized to one in `L²(U)` with the grid quadrature; first
    /// significant component positive.
    pub eigenfunctions: Vec<Vec<f64>>,
    /// `‖Hχ - Eχ‖_{L²(U)}` per pair.
    pub residuals: Vec<f64>,
    /// Eigenvalues of the same discrete operator with zero potential.
    pub free_energies: Vec<f64>,
}

impl BlochSpectrum {
    pub fn n_bands(&self) -> usize {
        self.energies.len()
    }
}

fn fix_sign(v: &mut [f64]) {
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-8 * scale) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Lowest `n_bands` eigenpairs of `hamiltonian`.
pub fn solve_bloch(hamiltonian: &Hamiltonian, n_bands: usize, opts: EigenOptions) -> Result<BlochSpectrum> {
    let grid = hamiltonian.grid().clone();
    let dim = hamiltonian.dim();
    if n_bands == 0 || n_bands >= dim {
        return Err(Error::InvalidArgument(format!(
            "band count must be in 1..{dim} (interior unknowns), got {n_bands}"
        )));
    }
    let mean_w = hamiltonian.potential().iter().sum::<f64>() / dim as f64;
    let precond = TensorInverse::new(&grid, mean_w - opts.shift);
    if !(precond.lowest() > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eigensolver shift {} is not below the spectrum",
            opts.shift
        )));
    }
    let apply = |x: &[f64], y: &mut [f64]| hamiltonian.apply(x, y);
    let shifted = |x: &[f64], y: &mut [f64]| {
        hamiltonian.apply(x, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi -= opts.shift * xi;
        }
    };
    let solve = |b: &[f64], x: &mut [f64]| -> Result<()> {
        precond.apply(b, x);
        conjugate_gradient(
            shifted,
            |r: &[f64], z: &mut [f64]| precond.apply(r, z),
            b,
            x,
            CgOptions {
                rel_tol: 1e-13,
                abs_tol: 0.0,
                max_iter: 2000,
            },
        )?;
        Ok(())
    };
    let pairs = lowest_eigenpairs(dim, n_bands, apply, solve, opts)?;

    let scale = 1.0 / grid.cell_volume().sqrt();
    let mut energies = Vec::with_capacity(n_bands);
    let mut eigenfunctions = Vec::with_capacity(n_bands);
    let mut residuals = Vec::with_capacity(n_bands);
    for pair in pairs {
        let mut v: Vec<f64> = pair.vector.iter().map(|x| x * scale).collect();
        fix_sign(&mut v);
        energies.push(pair.value);
        eigenfunctions.push(v);
        // Residual of a unit Euclidean vector equals the L²(U) residual of
        // its normalized rescaling.
        residuals.push(pair.residual);
    }
    Ok(BlochSpectrum {
        free_energies: discrete_free_spectrum(&grid, n_bands),
        potential_sup: hamiltonian.potential_sup(),
        grid,
        energies,
        eigenfunctions,
        residuals,
    })
}

/// Lowest `count` eigenvalues of `-½Δ_h` on `grid`, in closed form.
pub fn discrete_free_spectrum(grid: &UnitCellGrid, count: usize) -> Vec<f64> {
    let [h1, h2] = grid.cross.spacing();
    let [m1, m2] = grid.interior();
    let hy = grid.h_y();
    let periodic: Vec<f64> = (0..grid.n_y)
        .map(|k| 2.0 / (hy * hy) * (PI * k as f64 / grid.n_y as f64).sin().powi(2))
        .collect();
    let dirichlet = |m: usize, h: f64| -> Vec<f64> {
        (1..=m)
            .map(|p| 2.0 / (h * h) * (PI * p as f64 / (2.0 * (m + 1) as f64)).sin().powi(2))
            .collect()
    };
    let d1 = dirichlet(m1, h1);
    let d2 = dirichlet(m2, h2);
    let mut all = Vec::with_capacity(periodic.len() * d1.len() * d2.len());
    for a in &periodic {
        for b in &d1 {
            for c in &d2 {
                all.push(a + b + c);
            }
        }
    }
    all.sort_by(f64::total_cmp);
    all.truncate(count);
    all
}

/// Eigenvalues `½[(2πk)² + (πp/a1)² + (πq/a2)²]` of the continuous free
/// problem on the rectangle, up to `max_energy`, sorted.
pub fn free_rectangle_spectrum(widths: [f64; 2], max_energy: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let base1 = (PI / widths[0]).powi(2);
    let base2 = (PI / widths[1]).powi(2);
    let mut k = 0_i64;
    loop {
        let ey = (2.0 * PI * k as f64).powi(2);
        if 0.5 * (ey + base1 + base2) > max_energy {
            break;
        }
        let mult = if k == 0 { 1 } else { 2 };
        let mut p = 1_i64;
        loop {
            let e1 = base1 * (p * p) as f64;
            if 0.5 * (ey + e1 + base2) > max_energy {
                break;
            }
            let mut q = 1_i64;
            loop {
                let e = 0.5 * (ey + e1 + base2 * (q * q) as f64);
                if e > max_energy {
                    break;
                }
                for _ in 0..mult {
                    out.push(e);
                }
                q += 1;
            }
            p += 1;
        }
        k += 1;
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Antisymmetric matrix `P[n][m] = ∫_U ∂_y χ_m χ_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMatrix {
    pub values: DMatrix<f64>,
    /// `max |P + Pᵀ|` before antisymmetrization.
    pub symmetry_defect: f64,
}

pub fn gradient_matrix_elements(spectrum: &BlochSpectrum) -> GradientMatrix {
    let n = spectrum.n_bands();
    let grid = &spectrum.grid;
    let derivs: Vec<Vec<f64>> = spectrum
        .eigenfunctions
        .iter()
        .map(|chi| periodic_derivative_y(grid, chi))
        .collect();
    let mut raw = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            raw[(a, b)] = grid.inner(&derivs[b], &spectrum.eigenfunctions[a]);
        }
    }
    let symmetry_defect = (&raw + raw.transpose()).abs().max();
    let values = (&raw - raw.transpose()) * 0.5;
    GradientMatrix {
        values,
        symmetry_defect,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveMasses {
    pub values: Vec<f64>,
    /// Magnitude of the last term included in each band's sum.
    pub truncation_remainder: Vec<f64>,
}

/// Couplings below this magnitude are treated as absent when checking for
/// degenerate coupled pairs.
pub const COUPLING_TOL: f64 = 1e-6;

pub fn effective_masses(
    spectrum: &BlochSpectrum,
    gradient: &GradientMatrix,
    degeneracy_tol: f64,
) -> Result<EffectiveMasses> {
    let n = spectrum.n_bands();
    check_len("gradient matrix", n, gradient.values.nrows())?;
    let e = &spectrum.energies;
    let p = &gradient.values;
    let mut values = Vec::with_capacity(n);
    let mut remainder = Vec::with_capacity(n);
    for a in 0..n {
        let mut inv = 1.0;
        let mut last = 0.0;
        for b in 0..n {
            if a == b {
                continue;
            }
            let coupling = p[(a, b)] * p[(b, a)];
            let gap = e[a] - e[b];
            if gap.abs() <= degeneracy_tol {
                if p[(a, b)].abs() > COUPLING_TOL {
                    return Err(Error::DegenerateCoupledBands {
                        first: a.min(b) + 1,
                        second: a.max(b) + 1,
                        gap: gap.abs(),
                        coupling: p[(a, b)].abs(),
                    });
                }
                // Uncoupled degenerate partner: the term is absent.
                continue;
            }
            if coupling == 0.0 {
                last = 0.0;
                continue;
            }
            let term = 2.0 * coupling / gap;
            inv -= term;
            last = term.abs();
        }
        values.push(1.0 / inv);
        remainder.push(last);
    }
    Ok(EffectiveMasses {
        values,
        truncation_remainder: remainder,
    })
}

/// `g_n(z) = ∫ χ_n² dy` on every cross-section node (zero on the boundary).
pub fn confinement_densities(spectrum: &BlochSpectrum) -> Vec<Vec<f64>> {
    let grid = &spectrum.grid;
    let [m1, m2] = grid.interior();
    let hy = grid.h_y();
    spectrum
        .eigenfunctions
        .iter()
        .map(|chi| {
            let mut g = vec![0.0; grid.cross.len()];
            for j2 in 0..m2 {
                for j1 in 0..m1 {
                    let start = grid.index(0, j1, j2);
                    let s: f64 = chi[start..start + grid.n_y].iter().map(|c| c * c).sum();
                    g[grid.cross.index(j1 + 1, j2 + 1)] = hy * s;
                }
            }
            g
        })
        .collect()
}

/// Tail estimate `Σ_{n > N_b} e^{-λΛ_n} (Λ_n + ‖W‖_∞)²` over the continuous
/// free spectrum of the cross-section rectangle. It dominates the
/// contribution of the dropped bands to `Z` and to the charge profile.
pub fn band_truncation_bound(widths: [f64; 2], n_bands: usize, potential_sup: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "truncation exponent must be positive, got {lambda}"
        )));
    }
    let ground = 0.5 * PI * PI * (widths[0].powi(-2) + widths[1].powi(-2));
    // Past this energy every term, times the Weyl mode count, is below 1e-30
    // of the leading one.
    let mut max_energy = ground + 80.0 / lambda;
    let mut spectrum = free_rectangle_spectrum(widths, max_energy);
    while spectrum.len() <= n_bands {
        max_energy *= 2.0;
        spectrum = free_rectangle_spectrum(widths, max_energy);
    }
    let tail = spectrum[n_bands..]
        .iter()
        .rev()
        .map(|&l| (-lambda * l).exp() * (l + potential_sup).powi(2))
        .sum();
    Ok(tail)
}

/// Device-independent band data consumed by the device models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStructure {
    pub cross: CrossSection,
    pub energies: Vec<f64>,
    pub masses: Vec<f64>,
    /// Confinement density per band on the cross-section nodes.
    pub densities: Vec<Vec<f64>>,
    pub potential_sup: f64,
}

impl BandStructure {
    pub fn new(
        cross: CrossSection,
        energies: Vec<f64>,
        masses: Vec<f64>,
        densities: Vec<Vec<f64>>,
        potential_sup: f64,
    ) -> Result<Self> {
        let n = energies.len();
        if n == 0 {
            return Err(Error::InvalidArgument("at least one band is required".into()));
        }
        check_len("effective masses", n, masses.len())?;
        check_len("confinement densities", n, densities.len())?;
        for g in &densities {
            check_len("confinement density", cross.len(), g.len())?;
        }
        if let Some(m) = masses.iter().find(|m| !(**m > 0.0)) {
            return Err(Error::InvalidArgument(format!("effective masses must be positive, got {m}")));
        }
        Ok(Self {
            cross,
            energies,
            masses,
            densities,
            potential_sup,
        })
    }

    pub fn from_spectrum(spectrum: &BlochSpectrum, degeneracy_tol: f64) -> Result<Self> {
        let gradient = gradient_matrix_elements(spectrum);
        let masses = effective_masses(spectrum, &gradient, degeneracy_tol)?;
        Self::new(
            spectrum.grid.cross.clone(),
            spectrum.energies.clone(),
            masses.values,
            confinement_densities(spectrum),
            spectrum.potential_sup,
        )
    }

    /// Bands of the empty rectangle with `W = 0`, evaluated analytically on
    /// the nodes of `cross`. The modes `(p, q)` must be given explicitly.
    pub fn free_modes(cross: &CrossSection, modes: &[(usize, usize)]) -> Result<Self> {
        let [a1, a2] = cross.widths;
        let [n1, n2] = cross.nodes;
        let mut energies = Vec::new();
        let mut densities = Vec::new();
        for &(p, q) in modes {
            energies.push(0.5 * PI * PI * ((p * p) as f64 / (a1 * a1) + (q * q) as f64 / (a2 * a2)));
            let mut g = vec![0.0; cross.len()];
            for i2 in 0..n2 {
                for i1 in 0..n1 {
                    let [z1, z2] = cross.coordinates(i1, i2);
                    let s1 = (p as f64 * PI * z1 / a1).sin();
                    let s2 = (q as f64 * PI * z2 / a2).sin();
                    g[cross.index(i1, i2)] = 4.0 / (a1 * a2) * s1 * s1 * s2 * s2;
                }
            }
            densities.push(g);
        }
        let masses = vec![1.0; modes.len()];
        Self::new(cross.clone(), energies, masses, densities, 0.0)
    }

    pub fn n_bands(&self) -> usize {
        self.energies.len()
    }

    pub fn parameters(&self) -> BandParameters {
        BandParameters {
            energies: self.energies.clone(),
            masses: self.masses.clone(),
        }
    }
}

/// Band energies and masses, all the kinetic model needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandParameters {
    pub energies: Vec<f64>,
    pub masses: Vec<f64>,
}

impl BandParameters {
    pub fn new(energies: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if energies.is_empty() {
            return Err(Error::InvalidArgument("at least one band is required".into()));
        }
        check_len("effective masses", energies.len(), masses.len())?;
        if let Some(m) = masses.iter().find(|m| !(**m > 0.0)) {
            return Err(Error::InvalidArgument(format!("effective masses must be positive, got {m}")));
        }
        Ok(Self { energies, masses })
    }

    pub fn n_bands(&self) -> usize {
        self.energies.len()
    }
}

#[cfg(test)]
mod tests;
