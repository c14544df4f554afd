//! The Poisson operator and the Newton solve of the convex problem
//! `min_V ½∫|∇V|² + ∫ N_s ln Z(R^ε V)`.

use serde::{Deserialize, Serialize};
use nalgebra::{DMatrix, SymmetricEigen};

use super::{BoundaryPotential, EffectiveQuantities, Mollifier};
use crate::bloch::BandStructure;
use crate::error::{check_len, Error, Result};
use crate::grids::{trapezoid_weights, DeviceGrid};
use crate::linalg::{conjugate_gradient, dot, tensor_mode_transform, CgOptions};

/// `A = W(-Δ_h)`: the Hessian of `½∫|∇V|²` with edge differences and
/// trapezoid weights. Natural (Neumann) conditions hold on the cross-section
/// boundary; the two axial end planes are Dirichlet.
///
/// Dividing a row by its quadrature weight gives the 7-point Laplacian, with
/// ghost-node reflection on Neumann faces.
#[derive(Debug, Clone)]
pub struct PoissonOperator {
    grid: DeviceGrid,
    weights: Vec<f64>,
    w: [Vec<f64>; 3],
    h: [f64; 3],
    inverse: TensorInverse,
}

/// Exact inverse of `A` on the free (non-Dirichlet) nodes via the
/// generalized eigenvectors of each 1D factor.
#[derive(Debug, Clone)]
struct TensorInverse {
    dims: [usize; 3],
    q: [DMatrix<f64>; 3],
    lambda: [Vec<f64>; 3],
    /// `W^{-1/2}` on the free nodes.
    inv_sqrt_w: Vec<f64>,
}

fn stiffness(n: usize, h: f64) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        k[(i, i)] += 1.0 / h;
        k[(i + 1, i + 1)] += 1.0 / h;
        k[(i, i + 1)] -= 1.0 / h;
        k[(i + 1, i)] -= 1.0 / h;
    }
    k
}

fn scaled_eigen(k: DMatrix<f64>, w: &[f64]) -> (DMatrix<f64>, Vec<f64>) {
    let n = w.len();
    let s = DMatrix::from_fn(n, n, |i, j| k[(i, j)] / (w[i] * w[j]).sqrt());
    let e = SymmetricEigen::new(s);
    (e.eigenvectors, e.eigenvalues.iter().copied().collect())
}

impl TensorInverse {
    fn new(grid: &DeviceGrid) -> Self {
        let [n1, n2] = grid.cross.nodes;
        let [h1, h2] = grid.cross.spacing();
        let hx = grid.h_x();
        let mx = grid.n_x - 2;
        let w1 = trapezoid_weights(n1, h1);
        let w2 = trapezoid_weights(n2, h2);
        let k_full = stiffness(grid.n_x, hx);
        let kx = k_full.view((1, 1), (mx, mx)).into_owned();
        let (q1, l1) = scaled_eigen(stiffness(n1, h1), &w1);
        let (q2, l2) = scaled_eigen(stiffness(n2, h2), &w2);
        let (qx, lx) = scaled_eigen(kx, &vec![hx; mx]);
        let mut inv_sqrt_w = Vec::with_capacity(n1 * n2 * mx);
        for _ in 0..mx {
            for b in &w2 {
                for a in &w1 {
                    inv_sqrt_w.push(1.0 / (a * b * hx).sqrt());
                }
            }
        }
        Self {
            dims: [n1, n2, mx],
            q: [q1, q2, qx],
            lambda: [l1, l2, lx],
            inv_sqrt_w,
        }
    }

    /// `z = A_ff⁻¹ r` on free-node vectors.
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let scaled: Vec<f64> = r.iter().zip(&self.inv_sqrt_w).map(|(r, s)| r * s).collect();
        let [q1, q2, qx] = &self.q;
        let mut hat = tensor_mode_transform(&scaled, self.dims, [q1, q2, qx], true);
        let [d0, d1, _] = self.dims;
        for (k, v) in hat.iter_mut().enumerate() {
            let a = k % d0;
            let b = (k / d0) % d1;
            let c = k / (d0 * d1);
            // The Neumann factors have a zero mode, the Dirichlet one does not.
            *v /= (self.lambda[0][a].max(0.0) + self.lambda[1][b].max(0.0)) + self.lambda[2][c];
        }
        let back = tensor_mode_transform(&hat, self.dims, [q1, q2, qx], false);
        for ((z, b), s) in z.iter_mut().zip(&back).zip(&self.inv_sqrt_w) {
            *z = b * s;
        }
    }
}

pub fn assemble_poisson(grid: &DeviceGrid) -> PoissonOperator {
    let [n1, n2] = grid.cross.nodes;
    let [h1, h2] = grid.cross.spacing();
    let hx = grid.h_x();
    PoissonOperator {
        grid: grid.clone(),
        weights: grid.weights(),
        w: [
            trapezoid_weights(grid.n_x, hx),
            trapezoid_weights(n1, h1),
            trapezoid_weights(n2, h2),
        ],
        h: [hx, h1, h2],
        inverse: TensorInverse::new(grid),
    }
}

impl PoissonOperator {
    pub fn grid(&self) -> &DeviceGrid {
        &self.grid
    }

    /// Quadrature weights `W` on every node.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn nz(&self) -> usize {
        self.grid.cross.len()
    }

    /// Whether flat index `k` is on an axial end plane.
    pub fn is_dirichlet(&self, k: usize) -> bool {
        let ix = k / self.nz();
        ix == 0 || ix + 1 == self.grid.n_x
    }

    /// `out = A v` on every node, Dirichlet rows included.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let [n1, n2] = self.grid.cross.nodes;
        let n_x = self.grid.n_x;
        let [wx, w1, w2] = &self.w;
        let [hx, h1, h2] = self.h;
        out.iter_mut().for_each(|o| *o = 0.0);
        let idx = |ix: usize, i1: usize, i2: usize| i1 + n1 * (i2 + n2 * ix);
        for ix in 0..n_x {
            for i2 in 0..n2 {
                for i1 in 0..n1 {
                    let a = idx(ix, i1, i2);
                    let mut edge = |b: usize, c: f64| {
                        let d = c * (v[a] - v[b]);
                        out[a] += d;
                        out[b] -= d;
                    };
                    if ix + 1 < n_x {
                        edge(idx(ix + 1, i1, i2), w1[i1] * w2[i2] / hx);
                    }
                    if i1 + 1 < n1 {
                        edge(idx(ix, i1 + 1, i2), wx[ix] * w2[i2] / h1);
                    }
                    if i2 + 1 < n2 {
                        edge(idx(ix, i1, i2 + 1), wx[ix] * w1[i1] / h2);
                    }
                }
            }
        }
    }

    /// `out = A v` with Dirichlet rows zeroed.
    pub fn apply_free(&self, v: &[f64], out: &mut [f64]) {
        self.apply(v, out);
        self.zero_dirichlet(out);
    }

    pub fn zero_dirichlet(&self, v: &mut [f64]) {
        let nz = self.nz();
        let n = v.len();
        v[..nz].iter_mut().for_each(|x| *x = 0.0);
        v[n - nz..].iter_mut().for_each(|x| *x = 0.0);
    }

    /// Exact `A_ff⁻¹` on full-length vectors; Dirichlet entries stay zero.
    pub fn precondition(&self, r: &[f64], z: &mut [f64]) {
        let nz = self.nz();
        let n = r.len();
        z[..nz].iter_mut().for_each(|x| *x = 0.0);
        z[n - nz..].iter_mut().for_each(|x| *x = 0.0);
        self.inverse.apply(&r[nz..n - nz], &mut z[nz..n - nz]);
    }

    /// `½ vᵀ A v`.
    pub fn energy(&self, v: &[f64]) -> f64 {
        let mut av = vec![0.0; v.len()];
        self.apply(v, &mut av);
        0.5 * dot(v, &av)
    }

    /// `‖g‖_{W⁻¹}` over the free nodes; for `g = A V - W f` this is the
    /// quadrature L² norm of the pointwise residual `-ΔV - f`.
    pub fn dual_norm(&self, g: &[f64]) -> f64 {
        g.iter()
            .zip(&self.weights)
            .enumerate()
            .filter(|(k, _)| !self.is_dirichlet(*k))
            .map(|(_, (g, w))| g * g / w)
            .sum::<f64>()
            .sqrt()
    }

    /// Field equal to the boundary data on the end planes and zero inside.
    pub fn lift(&self, boundary: &BoundaryPotential) -> Result<Vec<f64>> {
        let nz = self.nz();
        check_len("left boundary potential", nz, boundary.left.len())?;
        check_len("right boundary potential", nz, boundary.right.len())?;
        let mut v = vec![0.0; self.grid.len()];
        let n = v.len();
        v[..nz].copy_from_slice(&boundary.left);
        v[n - nz..].copy_from_slice(&boundary.right);
        Ok(v)
    }
}

/// Solves `-ΔV = f` with the given end-plane data.
pub fn solve_linear_poisson(op: &PoissonOperator, source: &[f64], boundary: &BoundaryPotential) -> Result<Vec<f64>> {
    check_len("Poisson source", op.grid.len(), source.len())?;
    let mut v = op.lift(boundary)?;
    let mut rhs = vec![0.0; v.len()];
    op.apply(&v, &mut rhs);
    for ((r, f), w) in rhs.iter_mut().zip(source).zip(&op.weights) {
        *r = w * f - *r;
    }
    op.zero_dirichlet(&mut rhs);
    let mut d = vec![0.0; v.len()];
    conjugate_gradient(
        |x: &[f64], y: &mut [f64]| op.apply_free(x, y),
        |r: &[f64], z: &mut [f64]| op.precondition(r, z),
        &rhs,
        &mut d,
        CgOptions {
            rel_tol: 1e-14,
            abs_tol: 1e-300,
            max_iter: 200,
        },
    )?;
    for (v, d) in v.iter_mut().zip(&d) {
        *v += d;
    }
    Ok(v)
}

/// Everything that stays fixed across Poisson solves on one device.
#[derive(Debug, Clone)]
pub struct PoissonProblem {
    pub operator: PoissonOperator,
    pub bands: BandStructure,
    pub boundary: BoundaryPotential,
    pub mollifier: Mollifier,
    /// `g_n(z) w_z(z)`, the rows of the projection onto bands.
    projection: Vec<Vec<f64>>,
}

impl PoissonProblem {
    pub fn new(grid: &DeviceGrid, bands: BandStructure, boundary: BoundaryPotential, mollifier: Mollifier) -> Result<Self> {
        if bands.cross != grid.cross {
            return Err(Error::InvalidArgument(
                "band densities live on a different cross-section grid".into(),
            ));
        }
        boundary.check_compatible(&grid.cross)?;
        let wz = grid.cross.weights();
        let projection = bands
            .densities
            .iter()
            .map(|g| g.iter().zip(&wz).map(|(g, w)| g * w).collect())
            .collect();
        Ok(Self {
            operator: assemble_poisson(grid),
            bands,
            boundary,
            mollifier,
            projection,
        })
    }

    pub fn grid(&self) -> &DeviceGrid {
        self.operator.grid()
    }

    pub fn effective(&self, potential: &[f64]) -> Result<EffectiveQuantities> {
        EffectiveQuantities::new(potential, self.grid(), &self.bands, Some(&self.mollifier))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonOptions {
    /// Target for `‖A V - R(Wρ)‖_{W⁻¹}`.
    pub tol: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            max_backtracks: 50,
            armijo: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub potential: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// `J` at every iterate, starting with the initial guess.
    pub energy_history: Vec<f64>,
    pub effective: EffectiveQuantities,
}

/// Per-slice data for the value, gradient and Hessian of `∫ N_s ln Z`.
struct Linearization {
    /// `ln Z` per axial node.
    log_z: Vec<f64>,
    /// Band weights `q[x][n]`.
    q: Vec<Vec<f64>>,
}

fn linearize(problem: &PoissonProblem, smoothed: &[f64]) -> Linearization {
    let grid = problem.grid();
    let nz = grid.cross.len();
    let energies = &problem.bands.energies;
    let mut log_z = Vec::with_capacity(grid.n_x);
    let mut q = Vec::with_capacity(grid.n_x);
    for ix in 0..grid.n_x {
        let slice = &smoothed[ix * nz..(ix + 1) * nz];
        let a: Vec<f64> = energies
            .iter()
            .zip(&problem.projection)
            .map(|(e, gw)| e + dot(gw, slice))
            .collect();
        let shift = a.iter().copied().fold(f64::INFINITY, f64::min);
        let ex: Vec<f64> = a.iter().map(|a| (-(a - shift)).exp()).collect();
        let sum: f64 = ex.iter().sum();
        log_z.push(sum.ln() - shift);
        q.push(ex.iter().map(|e| e / sum).collect());
    }
    Linearization { log_z, q }
}

fn objective(problem: &PoissonProblem, ns: &[f64], v: &[f64]) -> (f64, Linearization) {
    let smoothed = problem.mollifier.apply_unchecked(v);
    let lin = linearize(problem, &smoothed);
    let wx = problem.grid().axial_weights();
    let coupling: f64 = wx.iter().zip(ns).zip(&lin.log_z).map(|((w, n), l)| w * n * l).sum();
    (problem.operator.energy(v) + coupling, lin)
}

/// `A V - R(W ρ)` with Dirichlet rows zeroed.
fn gradient(problem: &PoissonProblem, ns: &[f64], v: &[f64], lin: &Linearization) -> Vec<f64> {
    let grid = problem.grid();
    let nz = grid.cross.len();
    let wx = grid.axial_weights();
    let mut y = vec![0.0; v.len()];
    for ix in 0..grid.n_x {
        let c = wx[ix] * ns[ix];
        if c == 0.0 {
            continue;
        }
        let out = &mut y[ix * nz..(ix + 1) * nz];
        for (qn, gw) in lin.q[ix].iter().zip(&problem.projection) {
            for (o, g) in out.iter_mut().zip(gw) {
                *o += c * qn * g;
            }
        }
    }
    let ry = problem.mollifier.apply_unchecked(&y);
    let mut g = vec![0.0; v.len()];
    problem.operator.apply(v, &mut g);
    for (g, r) in g.iter_mut().zip(&ry) {
        *g -= r;
    }
    problem.operator.zero_dirichlet(&mut g);
    g
}

fn hessian_apply(problem: &PoissonProblem, ns: &[f64], lin: &Linearization, wx: &[f64], d: &[f64], out: &mut [f64]) {
    let grid = problem.grid();
    let nz = grid.cross.len();
    problem.operator.apply(d, out);
    let rd = problem.mollifier.apply_unchecked(d);
    let mut y = vec![0.0; d.len()];
    for ix in 0..grid.n_x {
        let c = wx[ix] * ns[ix];
        if c == 0.0 {
            continue;
        }
        let slice = &rd[ix * nz..(ix + 1) * nz];
        let t: Vec<f64> = problem.projection.iter().map(|gw| dot(gw, slice)).collect();
        let q = &lin.q[ix];
        let mean = dot(q, &t);
        let yx = &mut y[ix * nz..(ix + 1) * nz];
        for ((qn, tn), gw) in q.iter().zip(&t).zip(&problem.projection) {
            let s = c * qn * (tn - mean);
            for (o, g) in yx.iter_mut().zip(gw) {
                *o += s * g;
            }
        }
    }
    let ry = problem.mollifier.apply_unchecked(&y);
    for (o, r) in out.iter_mut().zip(&ry) {
        *o += r;
    }
    problem.operator.zero_dirichlet(out);
}

/// Minimizes the convex functional by Newton's method with Armijo
/// backtracking on `J`. The result satisfies
/// `‖A V - R^ε(W N_s S[R^ε V])‖_{W⁻¹} ≤ opts.tol`.
pub fn solve_nonlinear_poisson(
    problem: &PoissonProblem,
    ns: &[f64],
    initial: Option<&[f64]>,
    opts: NewtonOptions,
) -> Result<PoissonSolution> {
    let grid = problem.grid().clone();
    check_len("surface density", grid.n_x, ns.len())?;
    if let Some((ix, n)) = ns.iter().enumerate().find(|(_, n)| !(**n >= 0.0) || !n.is_finite()) {
        return Err(Error::NegativeDensity { value: *n, node: ix });
    }
    let op = &problem.operator;
    let mut v = op.lift(&problem.boundary)?;
    if let Some(init) = initial {
        check_len("initial potential", grid.len(), init.len())?;
        for (k, (v, i)) in v.iter_mut().zip(init).enumerate() {
            if !op.is_dirichlet(k) {
                *v = *i;
            }
        }
    }
    let wx = grid.axial_weights();
    let (mut j, mut lin) = objective(problem, ns, &v);
    let mut history = vec![j];
    let mut g = gradient(problem, ns, &v, &lin);
    let mut gnorm = op.dual_norm(&g);
    let mut iterations = 0;
    while gnorm > opts.tol {
        if iterations == opts.max_iter {
            return Err(Error::NewtonNotConverged {
                iterations,
                gradient_norm: gnorm,
                energy_history: history,
            });
        }
        iterations += 1;
        let rhs: Vec<f64> = g.iter().map(|g| -g).collect();
        let mut d = vec![0.0; v.len()];
        conjugate_gradient(
            |x: &[f64], y: &mut [f64]| hessian_apply(problem, ns, &lin, &wx, x, y),
            |r: &[f64], z: &mut [f64]| op.precondition(r, z),
            &rhs,
            &mut d,
            CgOptions {
                rel_tol: 1e-13,
                abs_tol: 1e-300,
                max_iter: 500,
            },
        )?;
        let slope = dot(&g, &d);
        // Roundoff floor for comparing values of J.
        let noise = 1e-13 * (j.abs() + op.energy(&v).abs() + 1.0);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let trial: Vec<f64> = v.iter().zip(&d).map(|(v, d)| v + t * d).collect();
            let (jt, lt) = objective(problem, ns, &trial);
            if jt <= j + opts.armijo * t * slope + noise {
                accepted = Some((trial, jt, lt));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, jt, lt)) = accepted else {
            return Err(Error::LineSearchFailed {
                iteration: iterations,
                gradient_norm: gnorm,
                energy_history: history,
            });
        };
        let g_new = gradient(problem, ns, &trial, &lt);
        let g_new_norm = op.dual_norm(&g_new);
        if jt > j && g_new_norm >= gnorm {
            // No progress at the roundoff floor of J.
            return Err(Error::NewtonNotConverged {
                iterations,
                gradient_norm: gnorm,
                energy_history: history,
            });
        }
        v = trial;
        j = jt;
        lin = lt;
        g = g_new;
        gnorm = g_new_norm;
        history.push(j);
    }
    let effective = problem.effective(&v)?;
    Ok(PoissonSolution {
        potential: v,
        iterations,
        gradient_norm: gnorm,
        energy_history: history,
        effective,
    })
}
