use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::BandParameters;
use crate::error::{Error, Result};
use crate::grids::MomentumGrid;
use crate::transport::advance_density;

use super::micromacro::MicroMacroSolver;
use super::theta::solve_theta;
use super::{AxialGrid, ScatteringKernel, DEFAULT_TRUNCATION_TOLERANCE};

/// The diffusive-limit scenario: a fixed smooth potential
/// `V_nn(x) = a_n exp(-(x/w)²)`, a compactly supported initial density
/// `(1 - (x/r)²)²` on `|x| < r` and a domain at least four times wider than
/// its support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitScenario {
    pub energies: Vec<f64>,
    pub masses: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub width: f64,
    /// Radius `r` of the initial bump.
    pub support: f64,
    pub half_length: f64,
    pub cells: usize,
    pub momentum_nodes: usize,
    /// Defaults to `8 √(max m)` when absent.
    pub p_max: Option<f64>,
    pub final_time: f64,
    pub tau: f64,
    /// Fraction of the stable step actually used.
    pub safety: f64,
    /// Backward-Euler steps of the drift-diffusion reference.
    pub reference_steps: usize,
}

impl Default for LimitScenario {
    fn default() -> Self {
        Self {
            energies: vec![0.0, 0.5],
            masses: vec![1.0, 1.4],
            amplitudes: vec![0.5, 0.8],
            width: 2.0,
            support: 1.0,
            half_length: 4.0,
            cells: 200,
            momentum_nodes: 64,
            p_max: None,
            final_time: 0.05,
            tau: 1.0,
            safety: 0.9,
            reference_steps: 4000,
        }
    }
}

impl LimitScenario {
    pub fn bands(&self) -> Result<BandParameters> {
        BandParameters::new(self.energies.clone(), self.masses.clone())
    }

    pub fn axial(&self) -> Result<AxialGrid> {
        AxialGrid::new(-self.half_length, 2.0 * self.half_length, self.cells + 1)
    }

    pub fn momentum(&self) -> Result<MomentumGrid> {
        let m_max = self.masses.iter().copied().fold(0.0, f64::max);
        MomentumGrid::new(self.p_max.unwrap_or(8.0 * m_max.sqrt()), self.momentum_nodes)
    }

    pub fn potential(&self, axial: &AxialGrid) -> Vec<Vec<f64>> {
        self.amplitudes
            .iter()
            .map(|a| axial.nodes().iter().map(|x| a * (-(x / self.width).powi(2)).exp()).collect())
            .collect()
    }

    pub fn initial_density(&self, axial: &AxialGrid) -> Vec<f64> {
        axial
            .nodes()
            .iter()
            .map(|x| {
                let s = x / self.support;
                if s.abs() < 1.0 { (1.0 - s * s).powi(2) } else { 0.0 }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub eta: f64,
    pub error: f64,
    /// `ln(e_prev / e) / ln(η_prev / η)`; absent on the first row.
    pub order: Option<f64>,
    pub steps: usize,
    /// `|mass(T) - mass(0)| / mass(0)`.
    pub leakage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub rows: Vec<LimitRow>,
    /// `‖f - P(f)‖_𝓜 / ‖η f_1‖_𝓜` at the smallest `η`.
    pub hilbert_ratio: f64,
    /// Error of the collisionless run at the largest `η`.
    pub control_error: f64,
    /// `‖N_s^{DD}(T)‖_{L²}`, the scale for the errors above.
    pub reference_norm: f64,
    pub reference_density: Vec<f64>,
    /// `N_s^η(T)` for every row, in row order.
    pub densities: Vec<Vec<f64>>,
    pub nodes: Vec<f64>,
}

impl LimitReport {
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].error < w[0].error)
    }
}

fn l2_distance(a: &[f64], b: &[f64], h: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| h * (x - y).powi(2)).sum::<f64>().sqrt()
}

fn mass(n: &[f64], h: f64) -> f64 {
    n.iter().sum::<f64>() * h
}

/// Runs the kinetic solver at every `η` in the decreasing list and
/// compares the densities at the final time with the drift-diffusion
/// solution that uses `D` from the `Θ` problem.
pub fn diffusive_limit_experiment(scenario: &LimitScenario, etas: &[f64]) -> Result<LimitReport> {
    if etas.is_empty() || etas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("the η list must be nonempty and strictly decreasing".into()));
    }
    let bands = scenario.bands()?;
    let axial = scenario.axial()?;
    let momentum = scenario.momentum()?;
    let vnn = scenario.potential(&axial);
    let n0 = scenario.initial_density(&axial);
    let h = axial.h();
    let kernel = ScatteringKernel::Constant { tau: scenario.tau };

    let solver_for = |kernel: ScatteringKernel, eta: f64| {
        MicroMacroSolver::new(&bands, &vnn, &axial, &momentum, kernel, eta, DEFAULT_TRUNCATION_TOLERANCE)
    };

    // Drift-diffusion reference with D(x) from the Θ problem.
    let probe = solver_for(kernel.clone(), etas[0])?;
    let table = probe.node_table();
    let theta = solve_theta(table, &kernel)?;
    let vs = table.effective_potential();
    let dt_ref = scenario.final_time / scenario.reference_steps as f64;
    let mut reference = n0.clone();
    for _ in 0..scenario.reference_steps {
        reference = advance_density(&reference, &vs, &theta.diffusion, dt_ref, h)?;
    }

    let run = |solver: &MicroMacroSolver| -> Result<(super::MicroMacroState, usize)> {
        let steps = (scenario.final_time / solver.stable_step(scenario.safety)).ceil() as usize;
        let dt = scenario.final_time / steps as f64;
        let state = solver.advance(&solver.initial_state(&n0)?, dt, steps)?;
        Ok((state, steps))
    };

    let initial_mass = mass(&n0, h);
    // The runs are independent; the last one also yields the Hilbert ratio
    // and the extra job is the collisionless control.
    let jobs: Vec<(ScatteringKernel, f64)> = etas
        .iter()
        .map(|&eta| (kernel.clone(), eta))
        .chain(std::iter::once((ScatteringKernel::Off, etas[0])))
        .collect();
    let last = etas.len() - 1;
    let outcomes: Vec<(Vec<f64>, usize, f64)> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, (k, eta))| {
            let solver = solver_for(k.clone(), *eta)?;
            let (state, steps) = run(&solver)?;
            let ratio = if i == last {
                hilbert_ratio_at(&solver, &state, &kernel)?
            } else {
                f64::NAN
            };
            Ok((state.density, steps, ratio))
        })
        .collect::<Result<_>>()?;

    let mut rows: Vec<LimitRow> = Vec::with_capacity(etas.len());
    let mut densities = Vec::with_capacity(etas.len());
    for (&eta, (density, steps, _)) in etas.iter().zip(&outcomes) {
        let error = l2_distance(density, &reference, h);
        let order = rows.last().map(|prev| (prev.error / error).ln() / (prev.eta / eta).ln());
        rows.push(LimitRow {
            eta,
            error,
            order,
            steps: *steps,
            leakage: (mass(density, h) - initial_mass).abs() / initial_mass,
        });
        densities.push(density.clone());
    }
    let hilbert_ratio = outcomes[last].2;
    let control_error = l2_distance(&outcomes[last + 1].0, &reference, h);

    Ok(LimitReport {
        rows,
        hilbert_ratio,
        control_error,
        reference_norm: l2_distance(&reference, &vec![0.0; reference.len()], h),
        reference_density: reference,
        densities,
        nodes: axial.nodes(),
    })
}

/// Compares the measured `f - P(f)` with `η f_1 = -η Θ (∂_x N + N ∂_x V_s)`
/// at the faces. With `N = Z u` the bracket is `Z ∂_x u`.
fn hilbert_ratio_at(solver: &MicroMacroSolver, state: &super::MicroMacroState, kernel: &ScatteringKernel) -> Result<f64> {
    let faces = solver.face_table();
    let theta = solve_theta(faces, kernel)?;
    let u = solver.slotboom(&state.density);
    let h = solver.node_table().axial.h();
    let block = faces.block();
    let eta = solver.eta();
    let corrector: Vec<f64> = theta
        .theta
        .iter()
        .enumerate()
        .map(|(k, th)| {
            let f = k / block;
            -eta * th * faces.z[f] * (u[f + 1] - u[f]) / h
        })
        .collect();
    let measured = solver.deviation(state);
    Ok(solver.face_norm(&measured) / solver.face_norm(&corrector))
}
