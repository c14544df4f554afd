//! Gummel coupling of the Poisson and transport solves, transient and
//! steady drivers, and the relative-entropy diagnostics.
//!
//! With the extensions `N̄_s ≡ N_b` and `V̄ = V_b(z)` the discrete relative
//! entropy differs from the convex free energy
//! `Σ (N ln N - N) - min_V J_N(V)` only by a multiple of the mass and a
//! constant. A fully converged backward-Euler step with Scharfetter-Gummel
//! fluxes therefore satisfies `W^{k+1} - W^k ≤ -dt 𝒟^{k+1}`, where `𝒟` is
//! the exact discrete dissipation computed here.

use serde::{Deserialize, Serialize};

use crate::bloch::BandStructure;
use crate::electrostatics::{
    band_weights, project_potential, solve_nonlinear_poisson, BoundaryPotential, Direction, EffectiveQuantities,
    Mollifier, NewtonOptions, PoissonProblem,
};
use crate::error::{check_len, Error, Result};
use crate::grids::{axial_norm, device_norm, DeviceGrid, Norm};
use crate::transport::{advance_density, bernoulli, diffusion_constant_alpha, harmonic_mean, steady_state};

/// How `D(x)` is obtained from the current potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DiffusionModel {
    /// Constant cross-section `1/τ`: `D = τ Σ_n e^{-(E_n + V_nn)} / (m_n Z)`.
    Relaxation { tau: f64 },
    /// A fixed value, independent of the potential.
    Fixed { value: f64 },
}

impl DiffusionModel {
    pub fn evaluate(&self, eff: &EffectiveQuantities, bands: &BandStructure) -> Result<Vec<f64>> {
        match self {
            Self::Relaxation { tau } => diffusion_constant_alpha(&bands.energies, &bands.masses, &eff.vnn, *tau),
            Self::Fixed { value } => Ok(vec![*value; eff.z.len()]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GummelOptions {
    /// Target for the axial H¹ norm of successive density updates.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial relaxation `θ` in `N ← θ N_new + (1 - θ) N_old`.
    pub damping: f64,
    /// Lower limit for the halving of `θ`.
    pub min_damping: f64,
}

impl Default for GummelOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iter: 200,
            damping: 1.0,
            min_damping: 1.0 / 64.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfConsistentConfig {
    /// `N_b`, imposed at both wire ends.
    pub boundary_density: f64,
    /// Time step; `None` asks for the steady problem.
    pub dt: Option<f64>,
    pub steps: usize,
    pub diffusion: DiffusionModel,
    pub gummel: GummelOptions,
    #[serde(default)]
    pub newton: NewtonOptions,
}

/// The device data shared by every solve: grid, bands and end-plane data.
#[derive(Debug, Clone)]
pub struct Device {
    pub grid: DeviceGrid,
    pub bands: BandStructure,
    pub boundary: BoundaryPotential,
}

impl Device {
    /// The Poisson problem for a regularization radius `ε` (identity for 0).
    pub fn problem(&self, epsilon: f64, direction: Direction) -> Result<PoissonProblem> {
        let mollifier = if epsilon > 0.0 {
            Mollifier::new(&self.grid, epsilon, direction)?
        } else {
            Mollifier::identity(&self.grid)
        };
        PoissonProblem::new(&self.grid, self.bands.clone(), self.boundary.clone(), mollifier)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GummelState {
    pub iteration: usize,
    pub ns: Vec<f64>,
    pub potential: Vec<f64>,
    pub residuals: Vec<f64>,
    pub damping: f64,
    pub effective: EffectiveQuantities,
    pub diffusion: Vec<f64>,
}

impl GummelState {
    /// Solves Poisson for `ns` to obtain a consistent starting pair.
    pub fn new(ns: Vec<f64>, problem: &PoissonProblem, config: &SelfConsistentConfig) -> Result<Self> {
        let sol = solve_nonlinear_poisson(problem, &ns, None, config.newton)?;
        let diffusion = config.diffusion.evaluate(&sol.effective, &problem.bands)?;
        Ok(Self {
            iteration: 0,
            ns,
            potential: sol.potential,
            residuals: Vec::new(),
            damping: config.gummel.damping,
            effective: sol.effective,
            diffusion,
        })
    }
}

/// One application of the fixed-point map: Poisson from the current
/// density, then one implicit transport step from `previous` (or the
/// steady solve) with the resulting `V_s`, then damping.
pub fn gummel_step(
    state: &GummelState,
    previous: &[f64],
    problem: &PoissonProblem,
    config: &SelfConsistentConfig,
) -> Result<GummelState> {
    let grid = problem.grid();
    check_len("previous density", grid.n_x, previous.len())?;
    let sol = solve_nonlinear_poisson(problem, &state.ns, Some(&state.potential), config.newton)?;
    let diffusion = config.diffusion.evaluate(&sol.effective, &problem.bands)?;
    let h = grid.h_x();
    let transported = match config.dt {
        Some(dt) => advance_density(previous, &sol.effective.vs, &diffusion, dt, h)?,
        None => steady_state(
            &sol.effective.vs,
            &diffusion,
            config.boundary_density,
            config.boundary_density,
            h,
        )?,
    };
    let theta = state.damping;
    let ns: Vec<f64> = transported
        .iter()
        .zip(&state.ns)
        .map(|(new, old)| theta * new + (1.0 - theta) * old)
        .collect();
    let change: Vec<f64> = ns.iter().zip(&state.ns).map(|(a, b)| a - b).collect();
    let residual = axial_norm(&change, grid, Norm::H1)?;
    let mut damping = state.damping;
    if state.residuals.last().is_some_and(|last| residual > *last) {
        damping = (0.5 * damping).max(config.gummel.min_damping);
    }
    let mut residuals = state.residuals.clone();
    residuals.push(residual);
    Ok(GummelState {
        iteration: state.iteration + 1,
        ns,
        potential: sol.potential,
        residuals,
        damping,
        effective: sol.effective,
        diffusion,
    })
}

/// Iterates [`gummel_step`] until the update norm reaches the tolerance,
/// then refreshes the potential for the final density.
pub fn converge_gummel(
    state: &GummelState,
    previous: &[f64],
    problem: &PoissonProblem,
    config: &SelfConsistentConfig,
) -> Result<GummelState> {
    let mut current = state.clone();
    current.residuals.clear();
    current.iteration = 0;
    current.damping = config.gummel.damping;
    loop {
        current = gummel_step(&current, previous, problem, config)?;
        let last = *current.residuals.last().unwrap();
        if last <= config.gummel.tol {
            let sol = solve_nonlinear_poisson(problem, &current.ns, Some(&current.potential), config.newton)?;
            current.diffusion = config.diffusion.evaluate(&sol.effective, &problem.bands)?;
            current.potential = sol.potential;
            current.effective = sol.effective;
            return Ok(current);
        }
        if current.iteration >= config.gummel.max_iter || !last.is_finite() {
            return Err(Error::GummelNotConverged {
                iterations: current.iteration,
                last,
                residuals: current.residuals,
            });
        }
    }
}

/// Extensions `N̄_s` and `V̄` of the boundary data into the device.
#[derive(Debug, Clone, PartialEq)]
pub struct Extensions {
    pub density: f64,
    /// `V̄` on every device node: the linear interpolant in x of the two
    /// end profiles, hence `V_b(z)` itself when both ends agree.
    pub potential: Vec<f64>,
    /// `N̄_n = N_b w_n[V̄]`, indexed `[n][x]`.
    pub band_densities: Vec<Vec<f64>>,
    /// `ln(N̄_s / Z̄)`, per axial node.
    pub log_slotboom: Vec<f64>,
    pub descriptor: String,
}

impl Extensions {
    pub fn new(problem: &PoissonProblem, boundary_density: f64) -> Result<Self> {
        if !(boundary_density > 0.0) {
            return Err(Error::AssumptionViolated(format!(
                "boundary density must be positive, got {boundary_density} (violates Assumption 3.3)"
            )));
        }
        let grid = problem.grid();
        let b = &problem.boundary;
        b.check_compatible(&grid.cross)?;
        let nz = grid.cross.len();
        let mut potential = vec![0.0; grid.len()];
        for ix in 0..grid.n_x {
            let s = ix as f64 / (grid.n_x - 1) as f64;
            for iz in 0..nz {
                potential[grid.index(ix, iz)] = (1.0 - s) * b.left[iz] + s * b.right[iz];
            }
        }
        let smoothed = problem.mollifier.apply(&potential)?;
        let vnn = project_potential(&smoothed, grid, &problem.bands)?;
        let weights = band_weights(&vnn, &problem.bands.energies)?;
        let band_densities = weights
            .iter()
            .map(|w| w.iter().map(|w| boundary_density * w).collect())
            .collect();
        let (z, _) = crate::electrostatics::effective_potential(&vnn, &problem.bands.energies)?;
        let log_slotboom = z.iter().map(|z| boundary_density.ln() - z.ln()).collect();
        let descriptor = if b.left == b.right {
            "N_s = N_b, V = V_b(z) independent of x".to_string()
        } else {
            "N_s = N_b, V linear in x between the end profiles".to_string()
        };
        Ok(Self {
            density: boundary_density,
            potential,
            band_densities,
            log_slotboom,
            descriptor,
        })
    }

    /// `β = max |∂_x ln ū|`.
    pub fn beta(&self, h: f64) -> f64 {
        self.log_slotboom
            .windows(2)
            .map(|w| ((w[1] - w[0]) / h).abs())
            .fold(0.0, f64::max)
    }
}

fn log_mean(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let r = b / a;
    if (r - 1.0).abs() < 1e-6 {
        let t = r - 1.0;
        // (r - 1) / ln r = 1 + t/2 - t²/12 + t³/24 - ...
        a * (1.0 + t / 2.0 - t * t / 12.0 + t * t * t / 24.0)
    } else {
        (b - a) / r.ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyValues {
    pub entropy: f64,
    pub dissipation: f64,
}

/// Relative entropy `W` and dissipation `𝒟` of a state.
///
/// `W = Σ_n ∫ (N_n ln(N_n/N̄_n) - N_n + N̄_n) dx + ½ ∫ |∇(V - V̄)|²` with
/// `0 ln 0 = 0`, and `𝒟 = ∫ D e^{-V_s} (∂_x u)² / u dx` in the face form
/// `Σ (D/h) B(δ) e^{-V_s,l} (Δu)² / L(u_l, u_r)` with the logarithmic mean
/// `L`; faces where `u` vanishes on one side are skipped.
pub fn relative_entropy(
    ns: &[f64],
    potential: &[f64],
    problem: &PoissonProblem,
    extensions: &Extensions,
    diffusion: &[f64],
) -> Result<EntropyValues> {
    let grid = problem.grid();
    check_len("surface density", grid.n_x, ns.len())?;
    check_len("diffusion coefficient", grid.n_x, diffusion.len())?;
    let eff = problem.effective(potential)?;
    let weights = band_weights(&eff.vnn, &problem.bands.energies)?;
    let wx = grid.axial_weights();
    let mut entropy = 0.0;
    for (w, bar) in weights.iter().zip(&extensions.band_densities) {
        for ix in 0..grid.n_x {
            let n = ns[ix] * w[ix];
            let nbar = bar[ix];
            let density = if n > 0.0 { n * (n / nbar).ln() - n + nbar } else { nbar };
            entropy += wx[ix] * density;
        }
    }
    let mismatch: Vec<f64> = potential.iter().zip(&extensions.potential).map(|(a, b)| a - b).collect();
    entropy += problem.operator.energy(&mismatch);

    let h = grid.h_x();
    let u: Vec<f64> = ns.iter().zip(&eff.vs).map(|(n, v)| n * v.exp()).collect();
    let mut dissipation = 0.0;
    for i in 0..grid.n_x - 1 {
        let mean = log_mean(u[i], u[i + 1]);
        if mean <= 0.0 {
            continue;
        }
        let d = harmonic_mean(diffusion[i], diffusion[i + 1]);
        let conductance = d / h * bernoulli(eff.vs[i + 1] - eff.vs[i]) * (-eff.vs[i]).exp();
        dissipation += conductance * (u[i + 1] - u[i]).powi(2) / mean;
    }
    Ok(EntropyValues { entropy, dissipation })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub extension: String,
    pub times: Vec<f64>,
    pub entropy: Vec<f64>,
    pub dissipation: Vec<f64>,
    pub mass: Vec<f64>,
    pub gummel_iterations: Vec<usize>,
    pub residuals: Vec<f64>,
    /// `C_0 = (e - 1) Σ_n ∫ N̄_n dx`; pointwise `x ≤ x ln(x/y) - x + y + (e-1) y`
    /// gives `∫ N_s ≤ W + C_0`.
    pub mass_offset: f64,
    /// Growth rate `max D · β²` of the Gronwall envelope.
    pub growth_rate: f64,
}

impl EntropyReport {
    /// `(W(0) + C_0) e^{rate t}`.
    pub fn envelope(&self, t: f64) -> f64 {
        (self.entropy[0] + self.mass_offset) * (self.growth_rate * t).exp()
    }

    pub fn within_envelope(&self) -> bool {
        self.times
            .iter()
            .zip(&self.mass)
            .all(|(t, m)| *m <= self.envelope(*t) * (1.0 + 1e-12))
    }

    /// Largest per-step increase of `W`.
    pub fn max_entropy_increase(&self) -> f64 {
        self.entropy.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest value of `(W^{k+1} - W^k)/dt + 𝒟^{k+1}`; nonpositive up to
    /// solver tolerances for a converged implicit run.
    pub fn max_dissipation_defect(&self) -> f64 {
        (1..self.times.len())
            .map(|k| {
                let dt = self.times[k] - self.times[k - 1];
                (self.entropy[k] - self.entropy[k - 1]) / dt + self.dissipation[k]
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `N_s` after every step, starting with the initial data.
    pub densities: Vec<Vec<f64>>,
    /// Final potential.
    pub potential: Vec<f64>,
    pub report: EntropyReport,
}

/// Time loop of Gummel-converged backward-Euler steps.
///
/// The end values of the initial density are replaced by `N_b`. With a
/// positive regularization radius the data are capped at `1/ε` first.
pub fn run_transient(initial: &[f64], problem: &PoissonProblem, config: &SelfConsistentConfig) -> Result<Trajectory> {
    let grid = problem.grid();
    check_len("initial density", grid.n_x, initial.len())?;
    let Some(dt) = config.dt else {
        return Err(Error::InvalidArgument("a transient run needs a time step".into()));
    };
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    if let Some((node, value)) = initial.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::NegativeDensity { value: *value, node });
    }
    let epsilon = problem.mollifier.epsilon();
    let mut ns: Vec<f64> = if epsilon > 0.0 {
        initial.iter().map(|n| n.min(1.0 / epsilon)).collect()
    } else {
        initial.to_vec()
    };
    let n_x = grid.n_x;
    ns[0] = config.boundary_density;
    ns[n_x - 1] = config.boundary_density;

    let extensions = Extensions::new(problem, config.boundary_density)?;
    let wx = grid.axial_weights();
    let mass = |n: &[f64]| n.iter().zip(&wx).map(|(n, w)| n * w).sum::<f64>();
    let mut state = GummelState::new(ns, problem, config)?;
    let first = relative_entropy(&state.ns, &state.potential, problem, &extensions, &state.diffusion)?;
    let max_d = |d: &[f64]| d.iter().copied().fold(0.0, f64::max);
    let nbar_total: f64 = extensions
        .band_densities
        .iter()
        .map(|b| b.iter().zip(&wx).map(|(n, w)| n * w).sum::<f64>())
        .sum();
    let mut report = EntropyReport {
        extension: extensions.descriptor.clone(),
        times: vec![0.0],
        entropy: vec![first.entropy],
        dissipation: vec![first.dissipation],
        mass: vec![mass(&state.ns)],
        gummel_iterations: vec![0],
        residuals: vec![0.0],
        mass_offset: (std::f64::consts::E - 1.0) * nbar_total,
        growth_rate: max_d(&state.diffusion) * extensions.beta(grid.h_x()).powi(2),
    };
    let mut densities = vec![state.ns.clone()];
    let mut times = vec![0.0];
    for step in 1..=config.steps {
        let previous = state.ns.clone();
        state = converge_gummel(&state, &previous, problem, config)?;
        let t = step as f64 * dt;
        let values = relative_entropy(&state.ns, &state.potential, problem, &extensions, &state.diffusion)?;
        report.times.push(t);
        report.entropy.push(values.entropy);
        report.dissipation.push(values.dissipation);
        report.mass.push(mass(&state.ns));
        report.gummel_iterations.push(state.iteration);
        report.residuals.push(*state.residuals.last().unwrap());
        densities.push(state.ns.clone());
        times.push(t);
    }
    Ok(Trajectory {
        times,
        densities,
        potential: state.potential,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRow {
    pub epsilon: f64,
    /// `‖N_s^ε - N_s^0‖_{L²}` at the final time.
    pub density_delta: f64,
    /// `‖V^ε - V^0‖_{H¹}` at the final time.
    pub potential_delta: f64,
}

/// Runs the same transient for every `ε` and compares the final states with
/// the unregularized run.
pub fn epsilon_stability_sweep(
    device: &Device,
    initial: &[f64],
    config: &SelfConsistentConfig,
    epsilons: &[f64],
    direction: Direction,
) -> Result<Vec<EpsilonRow>> {
    let base = run_transient(initial, &device.problem(0.0, direction)?, config)?;
    let base_ns = base.densities.last().unwrap();
    epsilons
        .iter()
        .map(|&epsilon| {
            let run = if epsilon == 0.0 {
                base.clone()
            } else {
                run_transient(initial, &device.problem(epsilon, direction)?, config)?
            };
            let dn: Vec<f64> = run.densities.last().unwrap().iter().zip(base_ns).map(|(a, b)| a - b).collect();
            let dv: Vec<f64> = run.potential.iter().zip(&base.potential).map(|(a, b)| a - b).collect();
            Ok(EpsilonRow {
                epsilon,
                density_delta: axial_norm(&dn, &device.grid, Norm::L2)?,
                potential_delta: device_norm(&dv, &device.grid, Norm::H1)?,
            })
        })
        .collect()
}
