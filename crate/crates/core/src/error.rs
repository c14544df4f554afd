use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0}")]
    AssumptionViolated(String),

    #[error("eigensolver did not converge for eigenpair {index}: residual {residual:.3e} after {iterations} Lanczos steps")]
    EigenNotConverged {
        index: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("bands {first} and {second} are coupled (|P| = {coupling:.3e}) and degenerate (|E_n - E_m| = {gap:.3e}); the effective mass is undefined")]
    DegenerateCoupledBands {
        first: usize,
        second: usize,
        gap: f64,
        coupling: f64,
    },

    #[error("conjugate gradient did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("line search failed at Newton iteration {iteration} (gradient norm {gradient_norm:.3e})")]
    LineSearchFailed {
        iteration: usize,
        gradient_norm: f64,
        energy_history: Vec<f64>,
    },

    #[error("Newton iteration did not reach tolerance: gradient norm {gradient_norm:.3e} after {iterations} iterations")]
    NewtonNotConverged {
        iterations: usize,
        gradient_norm: f64,
        energy_history: Vec<f64>,
    },

    #[error("singular linear system (pivot {pivot:.3e} at row {row})")]
    SingularSystem { row: usize, pivot: f64 },

    #[error("time step {dt:.3e} violates the transport CFL limit {limit:.3e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("negative distribution value {value:.3e} at axial node {node}, band {band}, momentum node {momentum}")]
    NegativeDistribution {
        value: f64,
        node: usize,
        band: usize,
        momentum: usize,
    },

    #[error("negative density {value:.3e} at axial node {node}")]
    NegativeDensity { value: f64, node: usize },

    #[error("momentum truncation defect {defect:.3e} exceeds {threshold:.3e}; increase p_max")]
    MomentumTruncation { defect: f64, threshold: f64 },

    #[error("right-hand side is not mean-free on the momentum grid (defect {defect:.3e})")]
    Solvability { defect: f64 },

    #[error("Gummel iteration did not converge in {iterations} iterations (last residual {last:.3e})")]
    GummelNotConverged { iterations: usize, last: f64, residuals: Vec<f64> },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
