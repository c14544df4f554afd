use nalgebra::{DMatrix, DVector, LU};

use crate::bloch::BandParameters;
use crate::error::{check_len, Error, Result};

use super::collision::{collision_matrix, phase_weights};
use super::maxwellian::build_maxwellians;
use super::{AxialGrid, MaxwellianTable, ScatteringKernel};

/// Micro-macro unknowns: the density at axial nodes and the mean-free part
/// `g` of `f / M` at the cell faces between them.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroMacroState {
    pub density: Vec<f64>,
    /// Face-major phase-space layout, one block of `n_bands · n_p` per face.
    pub micro: Vec<f64>,
    pub time: f64,
}

enum Relaxation {
    Off,
    Bands {
        alpha: Vec<Vec<f64>>,
    },
    Dense(Vec<LU<f64, nalgebra::Dyn, nalgebra::Dyn>>),
}

/// Asymptotic-preserving solver for the scaled BGK equation with zero
/// inflow and a fixed, time-independent potential.
///
/// Writing `f = M (u + g)` with `u` the Slotboom variable and `g` mean-free
/// for the `M`-weighted average, the density obeys a conservation law with
/// flux `(1/η) Σ_n ∫ v M g dp` and `g` carries the stiff relaxation, which
/// is integrated implicitly. Densities live on nodes and `g` on faces, so
/// as `η → 0` the scheme degenerates into a consistent explicit
/// discretization of the drift-diffusion equation in Slotboom form.
pub struct MicroMacroSolver {
    nodes: MaxwellianTable,
    faces: MaxwellianTable,
    kernel: ScatteringKernel,
    eta: f64,
    weights: Vec<f64>,
    relaxation_rate_floor: f64,
}

impl MicroMacroSolver {
    pub fn new(
        bands: &BandParameters,
        vnn: &[Vec<f64>],
        axial: &AxialGrid,
        momentum: &crate::grids::MomentumGrid,
        kernel: ScatteringKernel,
        eta: f64,
        max_defect: f64,
    ) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::InvalidArgument(format!("η must be positive, got {eta}")));
        }
        kernel.validate(bands.n_bands(), momentum.n_p)?;
        let nodes = build_maxwellians(bands, vnn, axial, momentum, max_defect)?;
        let h = axial.h();
        let face_axis = AxialGrid::new(axial.start + 0.5 * h, axial.length - h, axial.n_x - 1)?;
        let face_vnn: Vec<Vec<f64>> = vnn.iter().map(|v| v.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()).collect();
        let faces = build_maxwellians(bands, &face_vnn, &face_axis, momentum, max_defect)?;
        let weights = phase_weights(&faces);
        let m_min = bands.masses.iter().copied().fold(f64::INFINITY, f64::min);
        let (alpha_1, _) = kernel.bounds();
        Ok(Self {
            nodes,
            faces,
            kernel,
            eta,
            weights,
            relaxation_rate_floor: alpha_1 * m_min,
        })
    }

    pub fn node_table(&self) -> &MaxwellianTable {
        &self.nodes
    }

    pub fn face_table(&self) -> &MaxwellianTable {
        &self.faces
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// A step satisfying both the face transport CFL and the explicit
    /// diffusion bound of the `η → 0` limit scheme, times `safety`.
    pub fn stable_step(&self, safety: f64) -> f64 {
        let h = self.nodes.axial.h();
        let rate = self.faces.max_velocity() / h + self.faces.max_force() / self.faces.momentum.h_p();
        let transport = self.eta / rate;
        let diffusion = if self.kernel.is_off() {
            f64::INFINITY
        } else {
            0.5 * h * h * self.relaxation_rate_floor
        };
        safety * transport.min(diffusion)
    }

    /// Equilibrium start `f = N 𝓜`: `g = 0`.
    pub fn initial_state(&self, density: &[f64]) -> Result<MicroMacroState> {
        check_len("initial density", self.nodes.n_x(), density.len())?;
        if let Some((node, value)) = density.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::NegativeDensity { value: *value, node });
        }
        Ok(MicroMacroState {
            density: density.to_vec(),
            micro: vec![0.0; self.faces.scripted.len()],
            time: 0.0,
        })
    }

    /// `u = N / Σ_n ∫ M_n dp` per node.
    pub fn slotboom(&self, density: &[f64]) -> Vec<f64> {
        density
            .iter()
            .enumerate()
            .map(|(i, n)| n / (self.nodes.z[i] * self.nodes.mass[i]))
            .collect()
    }

    fn relaxation(&self, theta: f64) -> Result<Relaxation> {
        Ok(match &self.kernel {
            ScatteringKernel::Off => Relaxation::Off,
            ScatteringKernel::Constant { tau } => Relaxation::Bands {
                alpha: vec![vec![1.0 / tau; self.nodes.n_bands()]; self.nodes.n_bands()],
            },
            ScatteringKernel::BandMatrix { alpha } => Relaxation::Bands { alpha: alpha.clone() },
            ScatteringKernel::Tabulated { .. } => {
                // L h = Q_B(𝓜 h) / 𝓜, so the implicit operator is a diagonal
                // similarity of I - θ Q_B.
                let mut factors = Vec::with_capacity(self.faces.n_x());
                for f in 0..self.faces.n_x() {
                    let m = self.faces.scripted_node(f);
                    let q = collision_matrix(&self.faces, &self.kernel, f);
                    let size = q.nrows();
                    let system = DMatrix::from_fn(size, size, |i, j| {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        delta - theta * q[(i, j)] * m[j] / m[i]
                    });
                    factors.push(system.lu());
                }
                Relaxation::Dense(factors)
            }
        })
    }

    /// Advances `steps` steps of size `dt`.
    pub fn advance(&self, state: &MicroMacroState, dt: f64, steps: usize) -> Result<MicroMacroState> {
        let limit = self.stable_step(1.0);
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, limit });
        }
        let relaxation = self.relaxation(dt / (self.eta * self.eta))?;
        let mut current = state.clone();
        for _ in 0..steps {
            current = self.step(&current, dt, &relaxation)?;
        }
        Ok(current)
    }

    fn step(&self, state: &MicroMacroState, dt: f64, relaxation: &Relaxation) -> Result<MicroMacroState> {
        let faces = &self.faces;
        let (nb, n_p, nf) = (faces.n_bands(), faces.n_p(), faces.n_x());
        let block = nb * n_p;
        let h = self.nodes.axial.h();
        let hp = faces.momentum.h_p();
        let eta = self.eta;
        let theta = dt / (eta * eta);
        let p = faces.momentum.nodes();
        let u = self.slotboom(&state.density);
        let g = &state.micro;
        let at = |f: isize, k: usize| -> f64 {
            if f < 0 || f >= nf as isize {
                0.0
            } else {
                g[f as usize * block + k]
            }
        };
        let mut micro = vec![0.0; g.len()];
        let mut flux = vec![0.0; nf];
        let mut transport = vec![0.0; block];
        let mut rhs = vec![0.0; block];
        for f in 0..nf {
            let fi = f as isize;
            let m = faces.scripted_node(f);
            let m0 = faces.mass[f];
            let grad = (u[f + 1] - u[f]) / h;
            for n in 0..nb {
                let a = faces.force[f][n];
                for j in 0..n_p {
                    let k = j + n_p * n;
                    let v = p[j] / faces.masses[n];
                    let here = at(fi, k);
                    let dx = if v > 0.0 { here - at(fi - 1, k) } else { at(fi + 1, k) - here };
                    let dp = if a > 0.0 {
                        here - if j > 0 { at(fi, k - 1) } else { 0.0 }
                    } else {
                        (if j + 1 < n_p { at(fi, k + 1) } else { 0.0 }) - here
                    };
                    transport[k] = v * dx / h + a * dp / hp;
                }
            }
            let mean = self.average(m, &transport) / m0;
            for n in 0..nb {
                for j in 0..n_p {
                    let k = j + n_p * n;
                    let v = p[j] / faces.masses[n];
                    rhs[k] = at(fi, k) - dt / eta * (transport[k] - mean + v * grad);
                }
            }
            let out = &mut micro[f * block..(f + 1) * block];
            match relaxation {
                Relaxation::Off => out.copy_from_slice(&rhs),
                Relaxation::Bands { alpha } => self.relax_bands(f, alpha, theta, &rhs, out)?,
                Relaxation::Dense(factors) => {
                    let sol = factors[f]
                        .solve(&DVector::from_column_slice(&rhs))
                        .ok_or(Error::SingularSystem { row: 0, pivot: 0.0 })?;
                    out.copy_from_slice(sol.as_slice());
                }
            }
            let drift = self.average(m, out) / m0;
            out.iter_mut().for_each(|x| *x -= drift);
            let velocity_moment: Vec<f64> = (0..block).map(|k| p[k % n_p] / faces.masses[k / n_p] * m[k] * out[k]).collect();
            let first: f64 = velocity_moment.chunks(n_p).map(|b| faces.momentum.integrate(b)).sum();
            flux[f] = faces.z[f] * first / eta;
        }
        let mut density = state.density.clone();
        for i in 1..self.nodes.n_x() - 1 {
            density[i] -= dt / h * (flux[i] - flux[i - 1]);
        }
        if let Some((node, value)) = density.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NegativeDensity { value: *value, node });
        }
        Ok(MicroMacroState {
            density,
            micro,
            time: state.time + dt,
        })
    }

    /// `Σ_n ∫ 𝓜_n h_n dp` with mirrored momentum pairs summed first.
    fn average(&self, m: &[f64], h: &[f64]) -> f64 {
        let n_p = self.faces.n_p();
        let weighted: Vec<f64> = m.iter().zip(h).map(|(m, h)| m * h).collect();
        weighted.chunks(n_p).map(|b| self.faces.momentum.integrate(b)).sum()
    }

    fn relax_bands(&self, face: usize, alpha: &[Vec<f64>], theta: f64, rhs: &[f64], out: &mut [f64]) -> Result<()> {
        let n_p = self.faces.n_p();
        let nb = alpha.len();
        let m = self.faces.scripted_node(face);
        let masses: Vec<f64> = m.chunks(n_p).map(|b| self.faces.momentum.integrate(b)).collect();
        let lambda: Vec<f64> = alpha.iter().map(|row| row.iter().zip(&masses).map(|(a, m)| a * m).sum()).collect();
        let moments: Vec<f64> = (0..nb)
            .map(|n| {
                let w: Vec<f64> = (0..n_p).map(|j| m[j + n_p * n] * rhs[j + n_p * n]).collect();
                self.faces.momentum.integrate(&w)
            })
            .collect();
        let system = DMatrix::from_fn(nb, nb, |n, n2| {
            let diag = if n == n2 { 1.0 + theta * lambda[n] } else { 0.0 };
            diag - theta * masses[n] * alpha[n][n2]
        });
        let s = system
            .lu()
            .solve(&DVector::from_vec(moments))
            .ok_or(Error::SingularSystem { row: 0, pivot: 0.0 })?;
        for n in 0..nb {
            let gain: f64 = alpha[n].iter().zip(s.iter()).map(|(a, s)| a * s).sum();
            for j in 0..n_p {
                let k = j + n_p * n;
                out[k] = (rhs[k] + theta * gain) / (1.0 + theta * lambda[n]);
            }
        }
        Ok(())
    }

    /// `f - P(f) = M g` at the faces, in the face phase-space layout.
    pub fn deviation(&self, state: &MicroMacroState) -> Vec<f64> {
        state
            .micro
            .iter()
            .enumerate()
            .map(|(k, g)| self.faces.plain[k] * g)
            .collect()
    }

    /// `Σ_f h Σ_n ∫ φ² / 𝓜 dp` over faces.
    pub fn face_norm(&self, phi: &[f64]) -> f64 {
        let block = self.faces.block();
        let h = self.nodes.axial.h();
        let mut total = 0.0;
        for f in 0..self.faces.n_x() {
            let m = self.faces.scripted_node(f);
            let part = &phi[f * block..(f + 1) * block];
            total += h * (0..block).map(|k| self.weights[k] * part[k] * part[k] / m[k]).sum::<f64>();
        }
        total.sqrt()
    }
}
