//! Band-projected potentials, the partition function and the charge profile,
//! together with the mollifier and the nonlinear Poisson solve.
//!
//! Every band sum is evaluated with the smallest exponent `E_n + V_nn`
//! factored out, so deep bands never underflow the result.

mod mollifier;
mod poisson;

use serde::{Deserialize, Serialize};

use crate::bloch::BandStructure;
use crate::error::{check_len, Error, Result};
use crate::grids::{CrossSection, DeviceGrid};

pub use mollifier::{Direction, Mollifier};
pub use poisson::{
    assemble_poisson, solve_linear_poisson, solve_nonlinear_poisson, NewtonOptions, PoissonOperator, PoissonProblem,
    PoissonSolution,
};

/// Dirichlet data `V_b(z)` at the two wire ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPotential {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl BoundaryPotential {
    pub fn uniform(cross: &CrossSection, value: f64) -> Self {
        Self {
            left: vec![value; cross.len()],
            right: vec![value; cross.len()],
        }
    }

    /// The same profile at both ends.
    pub fn symmetric(profile: Vec<f64>) -> Self {
        Self {
            left: profile.clone(),
            right: profile,
        }
    }

    pub fn from_fn(cross: &CrossSection, f: impl Fn(f64, f64) -> f64) -> Self {
        let [n1, n2] = cross.nodes;
        let mut profile = Vec::with_capacity(cross.len());
        for i2 in 0..n2 {
            for i1 in 0..n1 {
                let [z1, z2] = cross.coordinates(i1, i2);
                profile.push(f(z1, z2));
            }
        }
        Self::symmetric(profile)
    }

    /// Checks lengths and the vanishing normal derivative on `∂ω_z`.
    ///
    /// The normal derivative is measured with the second-order one-sided
    /// difference and compared against the size of the profile's curvature,
    /// so smooth compatible profiles pass at any resolution while profiles
    /// with an O(1) boundary slope are rejected.
    pub fn check_compatible(&self, cross: &CrossSection) -> Result<()> {
        check_len("left boundary potential", cross.len(), self.left.len())?;
        check_len("right boundary potential", cross.len(), self.right.len())?;
        for (side, profile) in [("left", &self.left), ("right", &self.right)] {
            let defect = normal_derivative_defect(cross, profile);
            if defect > 0.0 {
                return Err(Error::AssumptionViolated(format!(
                    "{side} boundary potential has a nonzero normal derivative on the cross-section \
                     boundary (violates Assumption 3.3 compatibility); excess {defect:.3e}"
                )));
            }
        }
        Ok(())
    }
}

fn normal_derivative_defect(cross: &CrossSection, profile: &[f64]) -> f64 {
    let [n1, n2] = cross.nodes;
    let h = cross.spacing();
    let at = |i1: usize, i2: usize| profile[cross.index(i1, i2)];
    let mut curvature: f64 = 0.0;
    let mut slope: f64 = 0.0;
    for i2 in 0..n2 {
        for i1 in 0..n1 {
            if i1 > 0 && i1 + 1 < n1 {
                curvature = curvature.max((at(i1 + 1, i2) - 2.0 * at(i1, i2) + at(i1 - 1, i2)).abs() / h[0]);
            }
            if i2 > 0 && i2 + 1 < n2 {
                curvature = curvature.max((at(i1, i2 + 1) - 2.0 * at(i1, i2) + at(i1, i2 - 1)).abs() / h[1]);
            }
        }
    }
    if n1 >= 3 {
        for i2 in 0..n2 {
            let lo = (-3.0 * at(0, i2) + 4.0 * at(1, i2) - at(2, i2)) / (2.0 * h[0]);
            let hi = (3.0 * at(n1 - 1, i2) - 4.0 * at(n1 - 2, i2) + at(n1 - 3, i2)) / (2.0 * h[0]);
            slope = slope.max(lo.abs()).max(hi.abs());
        }
    }
    if n2 >= 3 {
        for i1 in 0..n1 {
            let lo = (-3.0 * at(i1, 0) + 4.0 * at(i1, 1) - at(i1, 2)) / (2.0 * h[1]);
            let hi = (3.0 * at(i1, n2 - 1) - 4.0 * at(i1, n2 - 2) + at(i1, n2 - 3)) / (2.0 * h[1]);
            slope = slope.max(lo.abs()).max(hi.abs());
        }
    }
    let scale = profile.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    (slope - 2.0 * curvature - 1e-10 * scale.max(1.0)).max(0.0)
}

/// `V_nn(x) = ∫ V(x, z) g_nn(z) dz` for every band and axial node.
pub fn project_potential(potential: &[f64], grid: &DeviceGrid, bands: &BandStructure) -> Result<Vec<Vec<f64>>> {
    check_len("potential", grid.len(), potential.len())?;
    if bands.cross != grid.cross {
        return Err(Error::InvalidArgument(
            "band densities live on a different cross-section grid".into(),
        ));
    }
    let wz = grid.cross.weights();
    let weighted: Vec<Vec<f64>> = bands
        .densities
        .iter()
        .map(|g| g.iter().zip(&wz).map(|(g, w)| g * w).collect())
        .collect();
    Ok(weighted
        .iter()
        .map(|gw| {
            (0..grid.n_x)
                .map(|ix| {
                    grid.slice(potential, ix)
                        .iter()
                        .zip(gw)
                        .map(|(v, g)| v * g)
                        .sum()
                })
                .collect()
        })
        .collect())
}

/// Band sums at one axial node.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LogSum {
    /// `min_n (E_n + V_nn)`.
    shift: f64,
    /// `Σ_n e^{-(E_n + V_nn - shift)}`, at least one.
    sum: f64,
}

impl LogSum {
    fn new(exponents: impl Iterator<Item = f64> + Clone) -> Self {
        let shift = exponents.clone().fold(f64::INFINITY, f64::min);
        let sum = exponents.map(|a| (-(a - shift)).exp()).sum();
        Self { shift, sum }
    }

    fn log_z(&self) -> f64 {
        self.sum.ln() - self.shift
    }
}

/// Partition function `Z` and effective potential `V_s = -ln Z` per axial
/// node, from projected potentials `vnn[n][x]`.
pub fn effective_potential(vnn: &[Vec<f64>], energies: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if energies.is_empty() {
        return Err(Error::InvalidArgument("at least one band is required".into()));
    }
    check_len("projected potentials", energies.len(), vnn.len())?;
    let n_x = vnn[0].len();
    let mut z = Vec::with_capacity(n_x);
    let mut vs = Vec::with_capacity(n_x);
    for ix in 0..n_x {
        let s = LogSum::new(energies.iter().zip(vnn).map(move |(e, v)| e + v[ix]));
        let log_z = s.log_z();
        z.push(log_z.exp());
        vs.push(-log_z);
    }
    Ok((z, vs))
}

/// Occupation weights `w_n(x) = e^{-(E_n + V_nn)} / Z`, indexed `[n][x]`.
pub fn band_weights(vnn: &[Vec<f64>], energies: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_len("projected potentials", energies.len(), vnn.len())?;
    let n_x = vnn.first().map_or(0, Vec::len);
    let mut w = vec![vec![0.0; n_x]; energies.len()];
    for ix in 0..n_x {
        let s = LogSum::new(energies.iter().zip(vnn).map(move |(e, v)| e + v[ix]));
        for (n, (e, v)) in energies.iter().zip(vnn).enumerate() {
            w[n][ix] = (-(e + v[ix] - s.shift)).exp() / s.sum;
        }
    }
    Ok(w)
}

/// `S[V](x, z) = Σ_n w_n(x) g_nn(z)` on every device node.
pub fn charge_profile(vnn: &[Vec<f64>], energies: &[f64], densities: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_len("confinement densities", energies.len(), densities.len())?;
    let w = band_weights(vnn, energies)?;
    let nz = densities[0].len();
    let n_x = vnn[0].len();
    let mut s = vec![0.0; n_x * nz];
    for (wn, g) in w.iter().zip(densities) {
        for ix in 0..n_x {
            for (sz, gz) in s[ix * nz..(ix + 1) * nz].iter_mut().zip(g) {
                *sz += wn[ix] * gz;
            }
        }
    }
    Ok(s)
}

/// `V_nn`, `Z`, `V_s` and `S[V]` for one potential.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveQuantities {
    pub vnn: Vec<Vec<f64>>,
    pub z: Vec<f64>,
    pub vs: Vec<f64>,
    pub profile: Vec<f64>,
    pub epsilon: f64,
}

impl EffectiveQuantities {
    /// Evaluates everything from the potential seen by the bands, which is
    /// `R^ε V` when a mollifier is supplied.
    pub fn new(potential: &[f64], grid: &DeviceGrid, bands: &BandStructure, mollifier: Option<&Mollifier>) -> Result<Self> {
        let (smoothed, epsilon) = match mollifier {
            Some(m) => (m.apply(potential)?, m.epsilon()),
            None => (potential.to_vec(), 0.0),
        };
        let vnn = project_potential(&smoothed, grid, bands)?;
        let (z, vs) = effective_potential(&vnn, &bands.energies)?;
        let profile = charge_profile(&vnn, &bands.energies, &bands.densities)?;
        Ok(Self {
            vnn,
            z,
            vs,
            profile,
            epsilon,
        })
    }
}

/// Charge quantities derived from `N_s` and the effective quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeDensity {
    /// `ρ = N_s S[V]` on every device node.
    pub rho: Vec<f64>,
    /// `N_n = (N_s / Z) e^{-(E_n + V_nn)}`, indexed `[n][x]`.
    pub band_densities: Vec<Vec<f64>>,
    /// Slotboom variable `u = N_s / Z`.
    pub slotboom: Vec<f64>,
    /// `E_F = ln u`; `-∞` where `N_s = 0`.
    pub fermi_level: Vec<f64>,
}

pub fn charge_density(ns: &[f64], eff: &EffectiveQuantities, bands: &BandStructure) -> Result<ChargeDensity> {
    let n_x = eff.z.len();
    check_len("surface density", n_x, ns.len())?;
    let nz = bands.cross.len();
    let weights = band_weights(&eff.vnn, &bands.energies)?;
    let rho = (0..n_x * nz).map(|k| ns[k / nz] * eff.profile[k]).collect();
    let band_densities = weights
        .iter()
        .map(|w| w.iter().zip(ns).map(|(w, n)| w * n).collect())
        .collect();
    // u = N_s e^{V_s}; the product form avoids dividing by an underflowed Z.
    let slotboom: Vec<f64> = ns.iter().zip(&eff.vs).map(|(n, v)| n * v.exp()).collect();
    let fermi_level = ns
        .iter()
        .zip(&eff.vs)
        .map(|(n, v)| if *n > 0.0 { n.ln() + v } else { f64::NEG_INFINITY })
        .collect();
    Ok(ChargeDensity {
        rho,
        band_densities,
        slotboom,
        fermi_level,
    })
}
