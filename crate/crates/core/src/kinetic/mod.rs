//! Multiband BGK kinetic model: Maxwellians, the collision operator, the
//! `Θ` problem behind the diffusion coefficient, time stepping and the
//! diffusive-limit harness.
//!
//! Phase-space arrays are flat with the momentum index fastest, then the
//! band, then the axial node: `k = j + n_p (n + n_bands ix)`.

mod collision;
mod experiment;
mod maxwellian;
mod micromacro;
mod stepper;
mod theta;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grids::{trapezoid_weights, MomentumGrid};

pub use collision::{
    collision_apply, collision_matrix, implicit_collision, kernel_projection, ritz_values, weighted_inner,
    weighted_norm,
};
pub use experiment::{diffusive_limit_experiment, LimitReport, LimitRow, LimitScenario};
pub use maxwellian::{build_maxwellians, MaxwellianTable, DEFAULT_TRUNCATION_TOLERANCE};
pub use micromacro::{MicroMacroSolver, MicroMacroState};
pub use stepper::{advance_boltzmann, cfl_limit};
pub use theta::{solve_theta, ThetaField};

/// Uniform axial grid `x_i = start + i h`, `h = length / (n_x - 1)`.
///
/// With periodic boundaries the last node is joined to the first across one
/// further cell of width `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxialGrid {
    pub start: f64,
    pub length: f64,
    pub n_x: usize,
}

impl AxialGrid {
    pub fn new(start: f64, length: f64, n_x: usize) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() || !start.is_finite() {
            return Err(Error::InvalidGrid(format!("axial interval must be finite and nonempty, got length {length}")));
        }
        if n_x < 3 {
            return Err(Error::InvalidGrid(format!("axial grid needs at least 3 nodes, got {n_x}")));
        }
        Ok(Self { start, length, n_x })
    }

    pub fn h(&self) -> f64 {
        self.length / (self.n_x - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.start + i as f64 * self.h()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_x).map(|i| self.x(i)).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        trapezoid_weights(self.n_x, self.h())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Incoming characteristics carry no particles.
    ZeroInflow,
    Periodic,
}

/// The cross-section `α_{n,n'}(p,p')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ScatteringKernel {
    /// `α ≡ 1/τ`.
    Constant { tau: f64 },
    /// Momentum-independent `α_{n,n'}`; a symmetric band matrix.
    BandMatrix { alpha: Vec<Vec<f64>> },
    /// Full table over `(n, p_j)` pairs with row index `j + n_p n`.
    Tabulated { alpha: Vec<Vec<f64>> },
    /// Collisions switched off. Violates the lower bound on purpose and is
    /// only meant as a negative control.
    Off,
}

impl ScatteringKernel {
    /// `α` between `(n, p_j)` and `(n', p_j')`.
    #[inline]
    pub fn alpha(&self, n: usize, j: usize, n2: usize, j2: usize, n_p: usize) -> f64 {
        match self {
            Self::Constant { tau } => 1.0 / tau,
            Self::BandMatrix { alpha } => alpha[n][n2],
            Self::Tabulated { alpha } => alpha[j + n_p * n][j2 + n_p * n2],
            Self::Off => 0.0,
        }
    }

    pub fn is_off(&self) -> bool {
        matches!(self, Self::Off)
    }

    /// Smallest and largest table entries `(α_1, α_2)`.
    pub fn bounds(&self) -> (f64, f64) {
        let extremes = |rows: &[Vec<f64>]| {
            rows.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| (lo.min(*a), hi.max(*a)))
        };
        match self {
            Self::Constant { tau } => (1.0 / tau, 1.0 / tau),
            Self::BandMatrix { alpha } | Self::Tabulated { alpha } => extremes(alpha),
            Self::Off => (0.0, 0.0),
        }
    }

    /// Checks shape, symmetry and the positive bounds.
    pub fn validate(&self, n_bands: usize, n_p: usize) -> Result<()> {
        let table = match self {
            Self::Off => return Ok(()),
            Self::Constant { tau } => {
                if !(*tau > 0.0) || !tau.is_finite() {
                    return Err(Error::AssumptionViolated(format!(
                        "relaxation time must be positive and finite, got {tau} (violates Assumption 2.2)"
                    )));
                }
                return Ok(());
            }
            Self::BandMatrix { alpha } => (alpha, n_bands),
            Self::Tabulated { alpha } => (alpha, n_bands * n_p),
        };
        let (alpha, size) = table;
        check_len("cross-section rows", size, alpha.len())?;
        for row in alpha {
            check_len("cross-section columns", size, row.len())?;
        }
        for i in 0..size {
            for j in 0..i {
                let (a, b) = (alpha[i][j], alpha[j][i]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
                    return Err(Error::AssumptionViolated(format!(
                        "cross-section is not symmetric at ({i}, {j}): {a} vs {b} (violates Assumption 2.2)"
                    )));
                }
            }
        }
        let (lo, hi) = self.bounds();
        if !(lo > 0.0) || !hi.is_finite() {
            return Err(Error::AssumptionViolated(format!(
                "cross-section must satisfy 0 < α_1 ≤ α ≤ α_2 < ∞, got range [{lo}, {hi}] (violates Assumption 2.2)"
            )));
        }
        Ok(())
    }

    pub(crate) fn dense(&self, n_bands: usize, n_p: usize) -> DMatrix<f64> {
        let size = n_bands * n_p;
        DMatrix::from_fn(size, size, |r, c| self.alpha(r / n_p, r % n_p, c / n_p, c % n_p, n_p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticConfig {
    /// Scaled mean free path `η`.
    pub eta: f64,
    pub kernel: ScatteringKernel,
    pub momentum: MomentumGrid,
    pub axial: AxialGrid,
    pub boundary: BoundaryPolicy,
}

impl KineticConfig {
    pub fn validate(&self, n_bands: usize) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidArgument(format!("η must be positive, got {}", self.eta)));
        }
        self.kernel.validate(n_bands, self.momentum.n_p)
    }
}

/// `f_n(x_i, p_j)` at time `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionFunction {
    pub n_x: usize,
    pub n_bands: usize,
    pub n_p: usize,
    pub values: Vec<f64>,
    pub time: f64,
}

impl DistributionFunction {
    pub fn zeros(n_x: usize, n_bands: usize, n_p: usize) -> Self {
        Self {
            n_x,
            n_bands,
            n_p,
            values: vec![0.0; n_x * n_bands * n_p],
            time: 0.0,
        }
    }

    pub fn from_values(n_x: usize, n_bands: usize, n_p: usize, values: Vec<f64>) -> Result<Self> {
        check_len("distribution function", n_x * n_bands * n_p, values.len())?;
        Ok(Self {
            n_x,
            n_bands,
            n_p,
            values,
            time: 0.0,
        })
    }

    /// The local equilibrium `N_s(x) 𝓜_n(x, p)`.
    pub fn equilibrium(ns: &[f64], table: &MaxwellianTable) -> Result<Self> {
        check_len("surface density", table.n_x(), ns.len())?;
        let block = table.block();
        let values = table
            .scripted
            .iter()
            .enumerate()
            .map(|(k, m)| ns[k / block] * m)
            .collect();
        Self::from_values(table.n_x(), table.n_bands(), table.n_p(), values)
    }

    #[inline]
    pub fn index(&self, ix: usize, n: usize, j: usize) -> usize {
        j + self.n_p * (n + self.n_bands * ix)
    }

    pub fn node(&self, ix: usize) -> &[f64] {
        let b = self.n_bands * self.n_p;
        &self.values[ix * b..(ix + 1) * b]
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Errors on the first negative node.
    pub fn check_nonnegative(&self) -> Result<()> {
        match self.values.iter().position(|v| !(*v >= 0.0)) {
            None => Ok(()),
            Some(k) => {
                let j = k % self.n_p;
                let n = (k / self.n_p) % self.n_bands;
                let ix = k / (self.n_p * self.n_bands);
                Err(Error::NegativeDistribution {
                    value: self.values[k],
                    node: ix,
                    band: n,
                    momentum: j,
                })
            }
        }
    }

    pub(crate) fn check_shape(&self, table: &MaxwellianTable) -> Result<()> {
        check_len("distribution axial nodes", table.n_x(), self.n_x)?;
        check_len("distribution bands", table.n_bands(), self.n_bands)?;
        check_len("distribution momentum nodes", table.n_p(), self.n_p)
    }
}

/// `N_s^η = Σ_n ∫ f_n dp` and `J^η = (1/η) Σ_n ∫ (p/m_n) f_n dp` per node.
pub fn moments(f: &DistributionFunction, table: &MaxwellianTable, eta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    f.check_shape(table)?;
    let p = table.momentum.nodes();
    let mut ns = Vec::with_capacity(f.n_x);
    let mut current = Vec::with_capacity(f.n_x);
    let mut flux = vec![0.0; f.n_p];
    for ix in 0..f.n_x {
        let node = f.node(ix);
        let mut density = 0.0;
        let mut j_total = 0.0;
        for (n, fb) in node.chunks(f.n_p).enumerate() {
            density += table.momentum.integrate(fb);
            for (k, v) in flux.iter_mut().enumerate() {
                *v = p[k] / table.masses[n] * fb[k];
            }
            j_total += table.momentum.integrate(&flux);
        }
        ns.push(density);
        current.push(j_total / eta);
    }
    Ok((ns, current))
}
