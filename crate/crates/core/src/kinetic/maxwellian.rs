use crate::bloch::BandParameters;
use crate::error::{check_len, Error, Result};
use crate::grids::MomentumGrid;

use super::AxialGrid;

/// Truncation defect accepted by default; `p_max = 8 √(max m)` stays well
/// inside it on any reasonable momentum grid.
pub const DEFAULT_TRUNCATION_TOLERANCE: f64 = 1e-8;

/// Band Maxwellians on the phase-space grid.
///
/// `scripted` holds `𝓜_n = M_n / Z`, `plain` holds
/// `M_n = e^{-(p²/2m_n + E_n + V_nn)} / √(2π m_n)`, both in the flat
/// phase-space layout. `mass[ix] = Σ_n ∫ 𝓜_n dp` is the discrete mass
/// used by the collision loss term.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxwellianTable {
    pub axial: AxialGrid,
    pub momentum: MomentumGrid,
    pub energies: Vec<f64>,
    pub masses: Vec<f64>,
    /// `[n][x]`.
    pub vnn: Vec<Vec<f64>>,
    pub scripted: Vec<f64>,
    pub plain: Vec<f64>,
    pub z: Vec<f64>,
    pub mass: Vec<f64>,
    /// `max_x |1 - Σ_n ∫ 𝓜_n dp|`.
    pub defect: f64,
    /// `-∂_x V_nn`, indexed `[x][n]`: the momentum drift.
    pub(crate) force: Vec<Vec<f64>>,
}

impl MaxwellianTable {
    pub fn n_x(&self) -> usize {
        self.axial.n_x
    }

    pub fn n_bands(&self) -> usize {
        self.energies.len()
    }

    pub fn n_p(&self) -> usize {
        self.momentum.n_p
    }

    pub(crate) fn block(&self) -> usize {
        self.n_bands() * self.n_p()
    }

    pub fn scripted_node(&self, ix: usize) -> &[f64] {
        let b = self.block();
        &self.scripted[ix * b..(ix + 1) * b]
    }

    pub fn plain_node(&self, ix: usize) -> &[f64] {
        let b = self.block();
        &self.plain[ix * b..(ix + 1) * b]
    }

    /// `max |p/m_n|` over the grid.
    pub fn max_velocity(&self) -> f64 {
        let m_min = self.masses.iter().copied().fold(f64::INFINITY, f64::min);
        self.momentum.p_max / m_min
    }

    pub fn max_force(&self) -> f64 {
        self.force.iter().flatten().fold(0.0, |m: f64, a| m.max(a.abs()))
    }

    /// `V_s = -ln Z` per node.
    pub fn effective_potential(&self) -> Vec<f64> {
        self.z.iter().map(|z| -z.ln()).collect()
    }
}

/// Second-order derivative of samples on a uniform grid; one-sided at the
/// ends.
fn derivative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            if i == 0 {
                (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h)
            } else if i == n - 1 {
                (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * h)
            } else {
                (values[i + 1] - values[i - 1]) / (2.0 * h)
            }
        })
        .collect()
}

/// Tabulates `𝓜_n` and `M_n` for the projected potentials `vnn[n][x]`.
///
/// Every band sum factors out the smallest exponent, so the normalized
/// table never underflows as a whole. Errors when the measured truncation
/// defect exceeds `max_defect`.
pub fn build_maxwellians(
    bands: &BandParameters,
    vnn: &[Vec<f64>],
    axial: &AxialGrid,
    momentum: &MomentumGrid,
    max_defect: f64,
) -> Result<MaxwellianTable> {
    let nb = bands.n_bands();
    check_len("projected potentials", nb, vnn.len())?;
    for v in vnn {
        check_len("projected potential samples", axial.n_x, v.len())?;
    }
    if let Some(m) = bands.masses.iter().find(|m| !(**m > 0.0)) {
        return Err(Error::InvalidArgument(format!("effective masses must be positive, got {m}")));
    }
    let n_p = momentum.n_p;
    let p = momentum.nodes();
    let size = axial.n_x * nb * n_p;
    let mut scripted = Vec::with_capacity(size);
    let mut plain = Vec::with_capacity(size);
    let mut z = Vec::with_capacity(axial.n_x);
    let mut mass = Vec::with_capacity(axial.n_x);
    let mut defect: f64 = 0.0;
    for ix in 0..axial.n_x {
        let exponents: Vec<f64> = (0..nb).map(|n| bands.energies[n] + vnn[n][ix]).collect();
        let shift = exponents.iter().copied().fold(f64::INFINITY, f64::min);
        let sum: f64 = exponents.iter().map(|a| (-(a - shift)).exp()).sum();
        let z_here = sum.ln() - shift;
        let z_here = z_here.exp();
        let start = scripted.len();
        for n in 0..nb {
            let m = bands.masses[n];
            let band_weight = (-(exponents[n] - shift)).exp() / sum;
            let norm = (2.0 * std::f64::consts::PI * m).sqrt();
            for pj in &p {
                let value = band_weight * (-pj * pj / (2.0 * m)).exp() / norm;
                scripted.push(value);
                plain.push(value * z_here);
            }
        }
        let node_mass: f64 = scripted[start..].chunks(n_p).map(|b| momentum.integrate(b)).sum();
        defect = defect.max((1.0 - node_mass).abs());
        z.push(z_here);
        mass.push(node_mass);
    }
    if defect > max_defect {
        return Err(Error::MomentumTruncation {
            defect,
            threshold: max_defect,
        });
    }
    let slopes: Vec<Vec<f64>> = vnn.iter().map(|v| derivative(v, axial.h())).collect();
    let force = (0..axial.n_x).map(|ix| slopes.iter().map(|s| -s[ix]).collect()).collect();
    Ok(MaxwellianTable {
        axial: axial.clone(),
        momentum: momentum.clone(),
        energies: bands.energies.clone(),
        masses: bands.masses.clone(),
        vnn: vnn.to_vec(),
        scripted,
        plain,
        z,
        mass,
        defect,
        force,
    })
}
