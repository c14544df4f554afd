//! One driver per verb. Each returns the paths it wrote.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use nanowire_core::bloch::{
    assemble_hamiltonian, confinement_densities, free_rectangle_spectrum, solve_bloch, BandStructure, BlochSpectrum,
    EigenOptions, LatticePotential,
};
use nanowire_core::electrostatics::{
    assemble_poisson, solve_linear_poisson, solve_nonlinear_poisson, BoundaryPotential, NewtonOptions,
};
use nanowire_core::grids::{build_grids, device_norm, CrossSection, DeviceGrid, Norm, UnitCellGrid};
use nanowire_core::kinetic::diffusive_limit_experiment;
use nanowire_core::selfconsistent::{
    epsilon_stability_sweep, run_transient, Device, DiffusionModel, GummelOptions, SelfConsistentConfig,
};
use nanowire_core::transport::{advance_density, current};

use crate::config::{read_table, BoundarySpec, ConfigError, InitialSpec, LatticeSpec, LoadedConfig, RunConfig};
use crate::output::{write_json, Cell, CsvTable, Header};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] nanowire_core::Error),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(ConfigError::Assumption(_)) | Self::Solver(nanowire_core::Error::AssumptionViolated(_)) => {
                "assumption_violated"
            }
            Self::Config(_) => "config",
            Self::Solver(nanowire_core::Error::GummelNotConverged { .. }) => "gummel_not_converged",
            Self::Solver(_) => "solver",
            Self::Io(_) => "io",
        }
    }
}

pub type Outcome = Result<Vec<PathBuf>, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Verb {
    Bloch,
    Poisson,
    Dd,
    KineticSweep,
    Run,
    Convergence,
}

/// Everything a verb needs besides the configuration.
pub struct Context<'a> {
    pub loaded: &'a LoadedConfig,
    pub out: &'a Path,
    pub seed: u64,
    pub verbose: bool,
}

impl Context<'_> {
    fn config(&self) -> &RunConfig {
        &self.loaded.config
    }

    fn header(&self) -> Header {
        Header::new(&self.loaded.hash, Header::describe(&self.config().grid))
    }

    fn log(&self, message: impl AsRef<str>) {
        if self.verbose {
            eprintln!("[nanowire] {}", message.as_ref());
        }
    }

    fn eigen_options(&self) -> EigenOptions {
        let s = &self.config().solver;
        EigenOptions {
            tol: self.config().bloch.eig_tol,
            max_basis: s.eig_max_basis,
            max_restarts: s.eig_max_restarts,
            seed: self.seed,
            ..EigenOptions::default()
        }
    }

    fn newton(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.config().solver.newton_tol,
            max_iter: self.config().solver.newton_max_iter,
            ..NewtonOptions::default()
        }
    }
}

pub fn run_command(verb: Verb, ctx: &Context) -> Outcome {
    std::fs::create_dir_all(ctx.out)?;
    match verb {
        Verb::Bloch => bloch(ctx),
        Verb::Poisson => poisson(ctx),
        Verb::Dd => drift_diffusion(ctx),
        Verb::KineticSweep => kinetic_sweep(ctx),
        Verb::Run => self_consistent(ctx),
        Verb::Convergence => convergence(ctx),
    }
}

fn lattice(ctx: &Context, cell: &UnitCellGrid) -> Result<LatticePotential, CliError> {
    let config = ctx.config();
    Ok(match &config.bloch.potential {
        LatticeSpec::Free => LatticePotential::constant(cell, 0.0)?,
        LatticeSpec::Cosine { .. } => LatticePotential::from_fn(cell, |y, _, _| config.lattice_value(y))?,
        LatticeSpec::Table { path } => LatticePotential::new(cell, read_table(&ctx.loaded.base_dir.join(path))?)?,
    })
}

fn spectrum(ctx: &Context) -> Result<(BlochSpectrum, String), CliError> {
    let (cell, _, _) = build_grids(&ctx.config().grid)?;
    let w = lattice(ctx, &cell)?;
    let bytes: Vec<u8> = w.samples().iter().flat_map(|v| v.to_le_bytes()).collect();
    let potential_hash = hex::encode(Sha256::digest(&bytes));
    let h = assemble_hamiltonian(&w, &cell)?;
    ctx.log(format!("solving the cell problem with {} unknowns", h.dim()));
    Ok((solve_bloch(&h, ctx.config().bloch.bands, ctx.eigen_options())?, potential_hash))
}

fn bands(ctx: &Context) -> Result<BandStructure, CliError> {
    let (s, _) = spectrum(ctx)?;
    Ok(BandStructure::from_spectrum(&s, ctx.config().bloch.degeneracy_tol)?)
}

fn boundary(config: &RunConfig, cross: &CrossSection) -> BoundaryPotential {
    match config.physics.boundary_potential {
        BoundarySpec::Uniform { value } => BoundaryPotential::uniform(cross, value),
        BoundarySpec::Cosine { mean, amplitude } => {
            let [a1, a2] = cross.widths;
            BoundaryPotential::from_fn(cross, |z1, z2| mean + amplitude * (PI * z1 / a1).cos() * (PI * z2 / a2).cos())
        }
    }
}

fn device(ctx: &Context) -> Result<Device, CliError> {
    let (_, grid, _) = build_grids(&ctx.config().grid)?;
    let bands = bands(ctx)?;
    Ok(Device {
        boundary: boundary(ctx.config(), &grid.cross),
        grid,
        bands,
    })
}

fn initial_density(config: &RunConfig, grid: &DeviceGrid) -> Vec<f64> {
    let nb = config.physics.boundary_density;
    let mut n: Vec<f64> = match config.physics.initial {
        InitialSpec::Uniform => vec![nb; grid.n_x],
        InitialSpec::Bump { center, width, height } => grid
            .axial_nodes()
            .iter()
            .map(|x| nb + height * (-((x - center) / width).powi(2)).exp())
            .collect(),
    };
    let last = n.len() - 1;
    n[0] = nb;
    n[last] = nb;
    n
}

fn diffusion_model(config: &RunConfig) -> DiffusionModel {
    match config.physics.diffusion {
        Some(value) => DiffusionModel::Fixed { value },
        None => DiffusionModel::Relaxation { tau: config.physics.tau },
    }
}

fn field_table(grid: &DeviceGrid, name: &str, field: &[f64]) -> CsvTable {
    let mut t = CsvTable::new(&["x", "z1", "z2", name]);
    for ix in 0..grid.n_x {
        for i2 in 0..grid.cross.nodes[1] {
            for i1 in 0..grid.cross.nodes[0] {
                let [z1, z2] = grid.cross.coordinates(i1, i2);
                let k = grid.index(ix, grid.cross.index(i1, i2));
                t.row(&[grid.x(ix).into(), z1.into(), z2.into(), field[k].into()]);
            }
        }
    }
    t
}

#[derive(Serialize)]
struct BlochSummary {
    bands: usize,
    potential_sha256: String,
    energies: Vec<f64>,
    masses: Vec<f64>,
    residuals: Vec<f64>,
    /// Eigenvalues of the discrete operator with zero potential.
    discrete_free_energies: Vec<f64>,
    /// Closed-form free spectrum; present for the free potential only.
    analytic_energies: Option<Vec<f64>>,
    relative_errors: Option<Vec<f64>>,
}

fn bloch(ctx: &Context) -> Outcome {
    let (s, potential_sha256) = spectrum(ctx)?;
    let bands = BandStructure::from_spectrum(&s, ctx.config().bloch.degeneracy_tol)?;
    let (analytic_energies, relative_errors) = match ctx.config().bloch.potential {
        LatticeSpec::Free => {
            let n = s.n_bands();
            let widths = s.grid.cross.widths;
            let mut top = 2.0 * s.energies[n - 1];
            let mut exact = free_rectangle_spectrum(widths, top);
            while exact.len() < n {
                top *= 2.0;
                exact = free_rectangle_spectrum(widths, top);
            }
            exact.truncate(n);
            let err = s.energies.iter().zip(&exact).map(|(a, b)| (a - b).abs() / b).collect();
            (Some(exact), Some(err))
        }
        _ => (None, None),
    };
    let header = ctx.header();
    let summary = BlochSummary {
        bands: s.n_bands(),
        potential_sha256,
        energies: s.energies.clone(),
        masses: bands.masses.clone(),
        residuals: s.residuals.clone(),
        discrete_free_energies: s.free_energies.clone(),
        analytic_energies,
        relative_errors,
    };
    let densities = confinement_densities(&s);
    let cross = &s.grid.cross;
    let columns: Vec<String> = ["z1".to_string(), "z2".to_string()]
        .into_iter()
        .chain((1..=densities.len()).map(|n| format!("g_{n}")))
        .collect();
    let mut t = CsvTable::new(&columns);
    for i2 in 0..cross.nodes[1] {
        for i1 in 0..cross.nodes[0] {
            let [z1, z2] = cross.coordinates(i1, i2);
            let k = cross.index(i1, i2);
            let mut row = vec![z1.into(), z2.into()];
            row.extend(densities.iter().map(|g| Cell::F(g[k])));
            t.row(&row);
        }
    }
    Ok(vec![
        write_json(ctx.out, "bloch.json", &header, &summary)?,
        t.write(ctx.out, "confinement.csv", &header)?,
    ])
}

#[derive(Serialize)]
struct PoissonSummary {
    iterations: usize,
    gradient_norm: f64,
    energy_history: Vec<f64>,
    epsilon: f64,
}

fn effective_table(eff: &nanowire_core::electrostatics::EffectiveQuantities, grid: &DeviceGrid) -> CsvTable {
    let columns: Vec<String> = ["x", "Z", "V_s"]
        .iter()
        .map(|s| s.to_string())
        .chain((1..=eff.vnn.len()).map(|n| format!("V_{n}{n}")))
        .collect();
    let mut t = CsvTable::new(&columns);
    for ix in 0..grid.n_x {
        let mut row = vec![grid.x(ix).into(), eff.z[ix].into(), eff.vs[ix].into()];
        row.extend(eff.vnn.iter().map(|v| Cell::F(v[ix])));
        t.row(&row);
    }
    t
}

fn poisson(ctx: &Context) -> Outcome {
    let dev = device(ctx)?;
    let config = ctx.config();
    let problem = dev.problem(config.physics.epsilon, config.physics.mollifier)?;
    let ns = initial_density(config, &dev.grid);
    let sol = solve_nonlinear_poisson(&problem, &ns, None, ctx.newton())?;
    ctx.log(format!("Newton converged in {} iterations", sol.iterations));
    let header = ctx.header();
    let summary = PoissonSummary {
        iterations: sol.iterations,
        gradient_norm: sol.gradient_norm,
        energy_history: sol.energy_history.clone(),
        epsilon: config.physics.epsilon,
    };
    Ok(vec![
        write_json(ctx.out, "poisson.json", &header, &summary)?,
        field_table(&dev.grid, "V", &sol.potential).write(ctx.out, "potential.csv", &header)?,
        effective_table(&sol.effective, &dev.grid).write(ctx.out, "effective.csv", &header)?,
    ])
}

#[derive(Serialize)]
struct DdSummary {
    dt: f64,
    steps: usize,
    mass: Vec<f64>,
}

fn drift_diffusion(ctx: &Context) -> Outcome {
    let dev = device(ctx)?;
    let config = ctx.config();
    let problem = dev.problem(config.physics.epsilon, config.physics.mollifier)?;
    let mut ns = initial_density(config, &dev.grid);
    // Transport only: the potential is frozen at its value for the initial data.
    let sol = solve_nonlinear_poisson(&problem, &ns, None, ctx.newton())?;
    let vs = sol.effective.vs.clone();
    let d = diffusion_model(config).evaluate(&sol.effective, &dev.bands)?;
    let h = dev.grid.h_x();
    let dt = config.solver.dt;
    let steps = config.solver.steps();
    let nodes = dev.grid.axial_nodes();
    let wx = dev.grid.axial_weights();
    let mut density = CsvTable::new(&["t", "x", "N_s"]);
    let mut flux = CsvTable::new(&["t", "x", "J"]);
    let mut mass = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        if step > 0 {
            ns = advance_density(&ns, &vs, &d, dt, h)?;
        }
        mass.push(ns.iter().zip(&wx).map(|(n, w)| n * w).sum());
        if step % config.output.cadence == 0 || step == steps {
            let t = step as f64 * dt;
            for (x, n) in nodes.iter().zip(&ns) {
                density.row(&[t.into(), (*x).into(), (*n).into()]);
            }
            for (i, j) in current(&ns, &vs, &d, h)?.iter().enumerate() {
                flux.row(&[t.into(), (0.5 * (nodes[i] + nodes[i + 1])).into(), (*j).into()]);
            }
        }
    }
    let header = ctx.header();
    Ok(vec![
        write_json(ctx.out, "dd.json", &header, &DdSummary { dt, steps, mass })?,
        density.write(ctx.out, "dd_density.csv", &header)?,
        flux.write(ctx.out, "dd_current.csv", &header)?,
    ])
}

/// Least-squares slope of `ln e` against `ln η`.
pub fn fitted_slope(etas: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = etas.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    rows: &'a [nanowire_core::kinetic::LimitRow],
    strictly_decreasing: bool,
    fitted_slope: f64,
    hilbert_ratio: f64,
    control_error: f64,
    reference_norm: f64,
    scenario: &'a nanowire_core::kinetic::LimitScenario,
}

fn kinetic_sweep(ctx: &Context) -> Outcome {
    let k = &ctx.config().kinetic;
    ctx.log(format!("diffusive-limit sweep over η = {:?}", k.etas));
    let report = diffusive_limit_experiment(&k.scenario, &k.etas)?;
    let mut table = CsvTable::new(&["eta", "error", "order", "steps", "leakage"]);
    for row in &report.rows {
        table.row(&[
            row.eta.into(),
            row.error.into(),
            row.order.unwrap_or(f64::NAN).into(),
            row.steps.into(),
            row.leakage.into(),
        ]);
    }
    let columns: Vec<String> = ["x".to_string(), "N_DD".to_string()]
        .into_iter()
        .chain(report.rows.iter().map(|r| format!("N_eta={}", r.eta)))
        .collect();
    let mut profiles = CsvTable::new(&columns);
    for (i, x) in report.nodes.iter().enumerate() {
        let mut row = vec![Cell::F(*x), Cell::F(report.reference_density[i])];
        row.extend(report.densities.iter().map(|d| Cell::F(d[i])));
        profiles.row(&row);
    }
    let errors: Vec<f64> = report.rows.iter().map(|r| r.error).collect();
    let summary = SweepSummary {
        rows: &report.rows,
        strictly_decreasing: report.strictly_decreasing(),
        fitted_slope: if k.etas.len() > 1 { fitted_slope(&k.etas, &errors) } else { f64::NAN },
        hilbert_ratio: report.hilbert_ratio,
        control_error: report.control_error,
        reference_norm: report.reference_norm,
        scenario: &k.scenario,
    };
    let header = Header::new(
        &ctx.loaded.hash,
        format!(
            "kinetic cells={} n_p={} half_length={}",
            k.scenario.cells, k.scenario.momentum_nodes, k.scenario.half_length
        ),
    );
    Ok(vec![
        table.write(ctx.out, "kinetic_sweep.csv", &header)?,
        profiles.write(ctx.out, "kinetic_profiles.csv", &header)?,
        write_json(ctx.out, "kinetic_sweep.json", &header, &summary)?,
    ])
}

#[derive(Serialize)]
struct RunSummary {
    extension: String,
    steps: usize,
    dt: f64,
    mass_offset: f64,
    growth_rate: f64,
    max_entropy_increase: f64,
    max_dissipation_defect: f64,
    within_envelope: bool,
    min_entropy: f64,
}

fn self_consistent(ctx: &Context) -> Outcome {
    let dev = device(ctx)?;
    let config = ctx.config();
    let sc = SelfConsistentConfig {
        boundary_density: config.physics.boundary_density,
        dt: Some(config.solver.dt),
        steps: config.solver.steps(),
        diffusion: diffusion_model(config),
        gummel: GummelOptions {
            tol: config.solver.gummel_tol,
            max_iter: config.solver.gummel_max_iter,
            damping: config.solver.damping,
            ..GummelOptions::default()
        },
        newton: ctx.newton(),
    };
    let problem = dev.problem(config.physics.epsilon, config.physics.mollifier)?;
    let init = initial_density(config, &dev.grid);
    ctx.log(format!("self-consistent run with {} steps", sc.steps));
    let run = run_transient(&init, &problem, &sc)?;
    let report = &run.report;
    let header = ctx.header();
    let mut files = Vec::new();

    let mut entropy = CsvTable::new(&["t", "W", "D", "mass", "gummel_iters", "residual"]);
    for k in 0..report.times.len() {
        entropy.row(&[
            report.times[k].into(),
            report.entropy[k].into(),
            report.dissipation[k].into(),
            report.mass[k].into(),
            report.gummel_iterations[k].into(),
            report.residuals[k].into(),
        ]);
    }
    files.push(entropy.write(ctx.out, "entropy.csv", &header)?);

    let nodes = dev.grid.axial_nodes();
    let mut density = CsvTable::new(&["t", "x", "N_s"]);
    let last = run.times.len() - 1;
    for (k, (t, ns)) in run.times.iter().zip(&run.densities).enumerate() {
        if k % config.output.cadence == 0 || k == last {
            for (x, n) in nodes.iter().zip(ns) {
                density.row(&[(*t).into(), (*x).into(), (*n).into()]);
            }
        }
    }
    files.push(density.write(ctx.out, "run_density.csv", &header)?);

    let eff = problem.effective(&run.potential)?;
    let d = sc.diffusion.evaluate(&eff, &dev.bands)?;
    let final_ns = &run.densities[last];
    let mut flux = CsvTable::new(&["x", "J"]);
    for (i, j) in current(final_ns, &eff.vs, &d, dev.grid.h_x())?.iter().enumerate() {
        flux.row(&[(0.5 * (nodes[i] + nodes[i + 1])).into(), (*j).into()]);
    }
    files.push(flux.write(ctx.out, "final_current.csv", &header)?);
    files.push(effective_table(&eff, &dev.grid).write(ctx.out, "final_effective.csv", &header)?);
    if config.output.fields {
        files.push(field_table(&dev.grid, "V", &run.potential).write(ctx.out, "final_potential.csv", &header)?);
    }

    if !config.physics.epsilon_sweep.is_empty() {
        let rows = epsilon_stability_sweep(&dev, &init, &sc, &config.physics.epsilon_sweep, config.physics.mollifier)?;
        let mut t = CsvTable::new(&["epsilon", "density_delta", "potential_delta"]);
        for r in &rows {
            t.row(&[r.epsilon.into(), r.density_delta.into(), r.potential_delta.into()]);
        }
        files.push(t.write(ctx.out, "epsilon_sweep.csv", &header)?);
    }

    let summary = RunSummary {
        extension: report.extension.clone(),
        steps: sc.steps,
        dt: config.solver.dt,
        mass_offset: report.mass_offset,
        growth_rate: report.growth_rate,
        max_entropy_increase: report.max_entropy_increase(),
        max_dissipation_defect: report.max_dissipation_defect(),
        within_envelope: report.within_envelope(),
        min_entropy: report.entropy.iter().copied().fold(f64::INFINITY, f64::min),
    };
    files.push(write_json(ctx.out, "run.json", &header, &summary)?);
    Ok(files)
}

#[derive(Serialize)]
pub struct Study {
    pub levels: Vec<usize>,
    pub h: Vec<f64>,
    pub errors: Vec<f64>,
    /// `log2(e_k / e_{k+1})` between successive levels.
    pub orders: Vec<f64>,
}

impl Study {
    fn new(levels: Vec<usize>, h: Vec<f64>, errors: Vec<f64>) -> Self {
        let orders = errors.windows(2).zip(h.windows(2)).map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln()).collect();
        Self {
            levels,
            h,
            errors,
            orders,
        }
    }
}

/// Free unit cell with `n` intervals per direction: largest relative error
/// of the lowest `bands` eigenvalues against the closed form.
pub fn bloch_refinement(levels: &[usize], bands: usize, opts: EigenOptions) -> Result<Study, CliError> {
    let mut errors = Vec::new();
    let mut h = Vec::new();
    let exact = free_rectangle_spectrum([1.0, 1.0], 20.0 * PI * PI);
    for &n in levels {
        let cell = UnitCellGrid::new(n, CrossSection::new([1.0, 1.0], [n + 1, n + 1])?)?;
        let w = LatticePotential::constant(&cell, 0.0)?;
        let s = solve_bloch(&assemble_hamiltonian(&w, &cell)?, bands, opts)?;
        let err = s.energies.iter().zip(&exact).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max);
        errors.push(err);
        h.push(1.0 / n as f64);
    }
    Ok(Study::new(levels.to_vec(), h, errors))
}

/// `V = sin(πx/L) cos(πz₁) cos(πz₂)` on `[0, 2] x (0, 1)²`: L² error of the
/// discrete solution.
pub fn poisson_refinement(levels: &[usize]) -> Result<Study, CliError> {
    let length = 2.0;
    let exact = |x: f64, z1: f64, z2: f64| (PI * x / length).sin() * (PI * z1).cos() * (PI * z2).cos();
    let lap = PI * PI / (length * length) + 2.0 * PI * PI;
    let mut errors = Vec::new();
    let mut h = Vec::new();
    for &n in levels {
        let g = DeviceGrid::new(length, n, CrossSection::new([1.0, 1.0], [n, n])?)?;
        let op = assemble_poisson(&g);
        let f = g.sample(|x, z1, z2| lap * exact(x, z1, z2));
        let v = solve_linear_poisson(&op, &f, &BoundaryPotential::uniform(&g.cross, 0.0))?;
        let d: Vec<f64> = v.iter().zip(g.sample(exact)).map(|(a, b)| a - b).collect();
        errors.push(device_norm(&d, &g, Norm::L2)?);
        h.push(g.h_x());
    }
    Ok(Study::new(levels.to_vec(), h, errors))
}

#[derive(Serialize)]
struct ConvergenceSummary {
    bloch: Study,
    poisson: Study,
}

fn convergence(ctx: &Context) -> Outcome {
    let c = &ctx.config().convergence;
    ctx.log("grid-refinement study");
    let summary = ConvergenceSummary {
        bloch: bloch_refinement(&c.bloch_levels, c.bloch_bands, ctx.eigen_options())?,
        poisson: poisson_refinement(&c.poisson_levels)?,
    };
    let mut t = CsvTable::new(&["study", "level", "h", "error", "order"]);
    for (id, study) in [(0usize, &summary.bloch), (1, &summary.poisson)] {
        for (i, level) in study.levels.iter().enumerate() {
            let order = if i == 0 { f64::NAN } else { study.orders[i - 1] };
            t.row(&[id.into(), (*level).into(), study.h[i].into(), study.errors[i].into(), order.into()]);
        }
    }
    let header = Header::new(&ctx.loaded.hash, "refinement study; study 0 = bloch, 1 = poisson".into());
    Ok(vec![
        t.write(ctx.out, "convergence.csv", &header)?,
        write_json(ctx.out, "convergence.json", &header, &summary)?,
    ])
}
