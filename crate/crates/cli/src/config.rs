//! Run configuration: a TOML file whose sections mirror the solver modules.
//!
//! Every field has a default, so an empty file is a valid configuration.
//! Physical bounds are checked at load time and errors name the violated
//! assumption.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nanowire_core::electrostatics::Direction;
use nanowire_core::grids::GridConfig;
use nanowire_core::kinetic::{LimitScenario, ScatteringKernel};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("{0}")]
    Assumption(String),
    #[error("invalid value for {field}: {message}")]
    Invalid { field: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub bloch: BlochSection,
    pub physics: PhysicsSection,
    pub solver: SolverSection,
    pub kinetic: KineticSection,
    pub convergence: ConvergenceSection,
    pub output: OutputSection,
}

/// Lattice potential `W_L(y, z)` on the unit cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatticeSpec {
    Free,
    /// `mean + amplitude cos(2πy)`.
    Cosine { mean: f64, amplitude: f64 },
    /// Whitespace-separated samples in unknown order (y fastest), relative
    /// paths resolved against the config file.
    Table { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlochSection {
    pub bands: usize,
    pub eig_tol: f64,
    pub degeneracy_tol: f64,
    pub potential: LatticeSpec,
}

impl Default for BlochSection {
    fn default() -> Self {
        Self {
            bands: 3,
            eig_tol: 1e-9,
            degeneracy_tol: 1e-6,
            potential: LatticeSpec::Free,
        }
    }
}

/// End-plane potential `V_b(z)`; both ends carry the same profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundarySpec {
    Uniform { value: f64 },
    /// `mean + amplitude cos(πz₁/a₁) cos(πz₂/a₂)`.
    Cosine { mean: f64, amplitude: f64 },
}

/// Initial surface density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Equal to the boundary density everywhere.
    Uniform,
    /// `N_b + height exp(-((x - center)/width)²)`.
    Bump { center: f64, width: f64, height: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsSection {
    /// Constant relaxation time; ignored when `alpha` is given.
    pub tau: f64,
    /// Band-to-band cross-section matrix, `nb x nb`.
    pub alpha: Option<Vec<Vec<f64>>>,
    /// Declared `[α_1, α_2]`; the cross-section must lie inside.
    pub alpha_bounds: Option<[f64; 2]>,
    pub boundary_density: f64,
    pub boundary_potential: BoundarySpec,
    pub initial: InitialSpec,
    /// Fixed `D`, overriding the relaxation-time formula.
    pub diffusion: Option<f64>,
    pub epsilon: f64,
    pub mollifier: Direction,
    /// Radii for the regularization sweep of the `run` verb.
    pub epsilon_sweep: Vec<f64>,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        Self {
            tau: 1.0,
            alpha: None,
            alpha_bounds: None,
            boundary_density: 1.0,
            boundary_potential: BoundarySpec::Uniform { value: 0.0 },
            initial: InitialSpec::Bump {
                center: 0.5,
                width: 0.25,
                height: 1.0,
            },
            diffusion: None,
            epsilon: 0.0,
            mollifier: Direction::Both,
            epsilon_sweep: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub gummel_tol: f64,
    pub gummel_max_iter: usize,
    pub damping: f64,
    pub dt: f64,
    pub final_time: f64,
    pub eig_max_basis: usize,
    pub eig_max_restarts: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            newton_max_iter: 50,
            gummel_tol: 1e-10,
            gummel_max_iter: 200,
            damping: 1.0,
            dt: 0.01,
            final_time: 0.1,
            eig_max_basis: 60,
            eig_max_restarts: 20,
        }
    }
}

impl SolverSection {
    /// Number of steps of size `dt` that reach `final_time`, rounded up.
    pub fn steps(&self) -> usize {
        (self.final_time / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KineticSection {
    pub etas: Vec<f64>,
    pub scenario: LimitScenario,
}

impl Default for KineticSection {
    fn default() -> Self {
        Self {
            etas: vec![0.5, 0.25, 0.125, 0.0625],
            scenario: LimitScenario::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSection {
    /// Nodes per direction of the free unit cell at each level.
    pub bloch_levels: Vec<usize>,
    pub bloch_bands: usize,
    /// Nodes per direction of the manufactured Poisson problem at each level.
    pub poisson_levels: Vec<usize>,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        Self {
            bloch_levels: vec![8, 16, 32],
            bloch_bands: 5,
            poisson_levels: vec![9, 17, 33],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Write every `cadence`-th time level of the field time series.
    pub cadence: usize,
    /// Also write the final 3D potential.
    pub fields: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { cadence: 1, fields: true }
    }
}

/// A validated configuration with its provenance.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// SHA-256 of the canonical serialization with defaults filled in.
    pub hash: String,
    pub base_dir: PathBuf,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&text, base_dir)
}

pub fn parse_config(text: &str, base_dir: PathBuf) -> Result<LoadedConfig, ConfigError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Schema(e.to_string()))?;
    config.validate(&base_dir)?;
    let mut hash = config_hash(&config);
    if let LatticeSpec::Table { path } = &config.bloch.potential {
        // A tabulated potential is part of the configuration's content.
        let table = std::fs::read(base_dir.join(path)).map_err(|source| ConfigError::Io {
            path: path.clone(),
            source,
        })?;
        hash = hex::encode(Sha256::digest([hash.as_bytes(), &table].concat()));
    }
    Ok(LoadedConfig {
        config,
        hash,
        base_dir,
    })
}

pub fn config_hash(config: &RunConfig) -> String {
    let canonical = serde_json::to_vec(config).expect("configuration serializes");
    hex::encode(Sha256::digest(&canonical))
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

fn positive(field: &'static str, value: f64) -> Result<(), ConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive and finite, got {value}")))
    }
}

impl RunConfig {
    pub fn validate(&self, base_dir: &Path) -> Result<(), ConfigError> {
        let g = &self.grid;
        if g.n_y < 3 || g.n_z.iter().any(|n| *n < 3) || g.n_x < 3 {
            return Err(invalid("grid", "every direction needs at least 3 nodes"));
        }
        positive("grid.length", g.length)?;
        positive("grid.widths", g.widths[0])?;
        positive("grid.widths", g.widths[1])?;
        positive("grid.p_max", g.p_max)?;
        if g.n_p < 3 {
            return Err(invalid("grid.n_p", format!("must be at least 3, got {}", g.n_p)));
        }

        if self.bloch.bands == 0 {
            return Err(invalid("bloch.bands", "at least one band is required"));
        }
        positive("bloch.eig_tol", self.bloch.eig_tol)?;
        positive("bloch.degeneracy_tol", self.bloch.degeneracy_tol)?;
        self.check_lattice(base_dir)?;

        let p = &self.physics;
        if !(p.tau > 0.0 && p.tau.is_finite()) {
            return Err(ConfigError::Assumption(format!(
                "physics.tau = {}: the cross-section 1/τ must be bounded and positive (violates Assumption 2.2)",
                p.tau
            )));
        }
        if let Some([a1, a2]) = p.alpha_bounds {
            if !(a1 > 0.0 && a1 <= a2 && a2.is_finite()) {
                return Err(ConfigError::Assumption(format!(
                    "physics.alpha_bounds = [{a1}, {a2}]: need 0 < α_1 ≤ α_2 < ∞ (violates Assumption 2.2)"
                )));
            }
        }
        if let Some(alpha) = &p.alpha {
            let nb = self.bloch.bands;
            if alpha.len() != nb || alpha.iter().any(|r| r.len() != nb) {
                return Err(invalid("physics.alpha", format!("must be a {nb} x {nb} matrix")));
            }
            ScatteringKernel::BandMatrix { alpha: alpha.clone() }
                .validate(nb, g.n_p)
                .map_err(|e| ConfigError::Assumption(format!("physics.alpha: {e}")))?;
            if let Some([a1, a2]) = p.alpha_bounds {
                if let Some(v) = alpha.iter().flatten().find(|v| **v < a1 || **v > a2) {
                    return Err(ConfigError::Assumption(format!(
                        "physics.alpha entry {v} lies outside [{a1}, {a2}] (violates Assumption 2.2)"
                    )));
                }
            }
        }
        if !(p.boundary_density > 0.0 && p.boundary_density.is_finite()) {
            return Err(ConfigError::Assumption(format!(
                "physics.boundary_density = {}: N_b must be a positive constant (violates Assumption 3.3)",
                p.boundary_density
            )));
        }
        if let InitialSpec::Bump { width, height, .. } = p.initial {
            positive("physics.initial.width", width)?;
            if !(p.boundary_density + height.min(0.0) >= 0.0) {
                return Err(ConfigError::Assumption(
                    "physics.initial: the bump makes the initial density negative (violates Assumption 3.2)".into(),
                ));
            }
        }
        if let Some(d) = p.diffusion {
            if !(d > 0.0 && d.is_finite()) {
                return Err(ConfigError::Assumption(format!(
                    "physics.diffusion = {d}: D must be bounded below by a positive constant (violates Assumption 3.1)"
                )));
            }
        }
        if !(p.epsilon >= 0.0) || p.epsilon_sweep.iter().any(|e| !(*e >= 0.0)) {
            return Err(invalid("physics.epsilon", "regularization radii must be nonnegative"));
        }

        let s = &self.solver;
        positive("solver.newton_tol", s.newton_tol)?;
        positive("solver.gummel_tol", s.gummel_tol)?;
        positive("solver.dt", s.dt)?;
        if !(s.final_time >= 0.0) {
            return Err(invalid("solver.final_time", "must be nonnegative"));
        }
        if !(s.damping > 0.0 && s.damping <= 1.0) {
            return Err(invalid("solver.damping", format!("must lie in (0, 1], got {}", s.damping)));
        }

        let k = &self.kinetic;
        if k.etas.is_empty() || k.etas.iter().any(|e| !(*e > 0.0)) || k.etas.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(invalid("kinetic.etas", "must be positive and strictly decreasing"));
        }
        if !(k.scenario.tau > 0.0) {
            return Err(ConfigError::Assumption(format!(
                "kinetic.scenario.tau = {}: violates Assumption 2.2",
                k.scenario.tau
            )));
        }
        if self.output.cadence == 0 {
            return Err(invalid("output.cadence", "must be at least 1"));
        }
        Ok(())
    }

    fn check_lattice(&self, base_dir: &Path) -> Result<(), ConfigError> {
        match &self.bloch.potential {
            LatticeSpec::Free => Ok(()),
            LatticeSpec::Cosine { mean, amplitude } => {
                if mean - amplitude.abs() < 0.0 {
                    Err(ConfigError::Assumption(format!(
                        "bloch.potential: W_L = {mean} + {amplitude} cos(2πy) takes negative values \
                         (violates Assumption 1.1)"
                    )))
                } else {
                    Ok(())
                }
            }
            LatticeSpec::Table { path } => {
                let samples = read_table(&base_dir.join(path))?;
                if let Some(w) = samples.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
                    return Err(ConfigError::Assumption(format!(
                        "bloch.potential table contains {w}: W_L must be nonnegative (violates Assumption 1.1)"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Lattice potential samples at `(y, z1, z2)`.
    pub fn lattice_value(&self, y: f64) -> f64 {
        match self.bloch.potential {
            LatticeSpec::Cosine { mean, amplitude } => mean + amplitude * (2.0 * PI * y).cos(),
            _ => 0.0,
        }
    }
}

pub fn read_table(path: &Path) -> Result<Vec<f64>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| invalid("bloch.potential.path", format!("{t:?}: {e}")))
        })
        .collect()
}
