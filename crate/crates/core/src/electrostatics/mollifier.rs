use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grids::DeviceGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    X,
    Z,
    Both,
}

/// Discrete approximation of the identity `R^ε`.
///
/// Separable convolution with the smooth bump `exp(-1/(1 - s²))` of radius
/// `ε`, normalized to unit mass over the infinite lattice and applied to the
/// zero extension of the field. The resulting matrix is symmetric with row
/// sums at most one; away from the ends it is Toeplitz, so it commutes with
/// any difference operator there. For `ε` below the grid spacing only the
/// centre tap survives and the operator is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Mollifier {
    epsilon: f64,
    direction: Direction,
    grid: DeviceGrid,
    /// Half kernels `k_0, k_1, ...` along x, z1 and z2.
    kernels: [Vec<f64>; 3],
}

fn bump(s: f64) -> f64 {
    if s.abs() < 1.0 {
        (-1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

fn half_kernel(epsilon: f64, h: f64) -> Vec<f64> {
    if epsilon <= h {
        return vec![1.0];
    }
    let mut k = Vec::new();
    let mut j = 0;
    loop {
        let v = bump(j as f64 * h / epsilon);
        if v == 0.0 {
            break;
        }
        k.push(v);
        j += 1;
    }
    let mass = k[0] + 2.0 * k[1..].iter().sum::<f64>();
    k.iter().map(|v| v / mass).collect()
}

/// Convolves every line of a strided 3-tensor along one axis.
fn convolve_axis(field: &[f64], dims: [usize; 3], axis: usize, kernel: &[f64]) -> Vec<f64> {
    if kernel.len() == 1 {
        return field.iter().map(|v| v * kernel[0]).collect();
    }
    let strides = [1, dims[0], dims[0] * dims[1]];
    let n = dims[axis];
    let stride = strides[axis];
    let r = kernel.len() - 1;
    let mut out = vec![0.0; field.len()];
    let others: Vec<usize> = (0..3).filter(|a| *a != axis).collect();
    for b in 0..dims[others[1]] {
        for a in 0..dims[others[0]] {
            let base = a * strides[others[0]] + b * strides[others[1]];
            for i in 0..n {
                let lo = i.saturating_sub(r);
                let hi = (i + r).min(n - 1);
                let mut acc = 0.0;
                for j in lo..=hi {
                    acc += kernel[i.abs_diff(j)] * field[base + j * stride];
                }
                out[base + i * stride] = acc;
            }
        }
    }
    out
}

impl Mollifier {
    pub fn new(grid: &DeviceGrid, epsilon: f64, direction: Direction) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "regularization radius must be nonnegative, got {epsilon}"
            )));
        }
        let [h1, h2] = grid.cross.spacing();
        let [a1, a2] = grid.cross.widths;
        let uses_x = direction != Direction::Z;
        let uses_z = direction != Direction::X;
        let half_domain = match direction {
            Direction::X => 0.5 * grid.length,
            Direction::Z => 0.5 * a1.min(a2),
            Direction::Both => 0.5 * grid.length.min(a1).min(a2),
        };
        if epsilon > half_domain {
            return Err(Error::InvalidArgument(format!(
                "regularization radius {epsilon} exceeds half the domain ({half_domain})"
            )));
        }
        let pick = |on: bool, h: f64| if on { half_kernel(epsilon, h) } else { vec![1.0] };
        Ok(Self {
            epsilon,
            direction,
            grid: grid.clone(),
            kernels: [pick(uses_x, grid.h_x()), pick(uses_z, h1), pick(uses_z, h2)],
        })
    }

    pub fn identity(grid: &DeviceGrid) -> Self {
        Self {
            epsilon: 0.0,
            direction: Direction::Both,
            grid: grid.clone(),
            kernels: [vec![1.0], vec![1.0], vec![1.0]],
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn is_identity(&self) -> bool {
        self.kernels.iter().all(|k| k.len() == 1)
    }

    /// `R^ε` on a field over every device node.
    pub fn apply(&self, field: &[f64]) -> Result<Vec<f64>> {
        check_len("mollified field", self.grid.len(), field.len())?;
        Ok(self.apply_unchecked(field))
    }

    pub(crate) fn apply_unchecked(&self, field: &[f64]) -> Vec<f64> {
        if self.is_identity() {
            return field.to_vec();
        }
        let [n1, n2] = self.grid.cross.nodes;
        let dims = [n1, n2, self.grid.n_x];
        let mut out = convolve_axis(field, dims, 2, &self.kernels[0]);
        out = convolve_axis(&out, dims, 0, &self.kernels[1]);
        out = convolve_axis(&out, dims, 1, &self.kernels[2]);
        out
    }

    /// The axial factor of `R^ε` on a field over the axial nodes.
    pub fn apply_axial(&self, field: &[f64]) -> Result<Vec<f64>> {
        check_len("mollified axial field", self.grid.n_x, field.len())?;
        Ok(convolve_axis(field, [field.len(), 1, 1], 0, &self.kernels[0]))
    }

    /// Dense matrix of the axial factor; intended for checks.
    pub fn axial_matrix(&self) -> nalgebra::DMatrix<f64> {
        let n = self.grid.n_x;
        let k = &self.kernels[0];
        nalgebra::DMatrix::from_fn(n, n, |i, j| k.get(i.abs_diff(j)).copied().unwrap_or(0.0))
    }

    /// Radius of the axial stencil in nodes.
    pub fn axial_reach(&self) -> usize {
        self.kernels[0].len() - 1
    }
}
