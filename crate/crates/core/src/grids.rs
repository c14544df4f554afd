//! Tensor-product grids and quadrature.
//!
//! Three grids are used throughout:
//!
//! - [`UnitCellGrid`]: the periodic cell `(-1/2, 1/2) x ω_z` of the Bloch
//!   problem. Periodic in `y`, homogeneous Dirichlet on the cross-section
//!   boundary, so only interior cross-section nodes carry unknowns.
//! - [`DeviceGrid`]: the device `[0, L] x ω_z`. Axial end slices are Dirichlet
//!   nodes; every cross-section node (boundary included) carries an unknown
//!   because the cross-section boundary condition is Neumann.
//! - [`MomentumGrid`]: a uniform grid on `[-p_max, p_max]`, symmetric about 0.
//!
//! The cross-section `ω_z` is the rectangle `(0, a1) x (0, a2)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Grid sizes and extents for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Nodes per period in the periodic direction of the unit cell.
    pub n_y: usize,
    /// Nodes across the cross-section, boundary nodes included.
    pub n_z: [usize; 2],
    /// Side lengths of the rectangular cross-section.
    pub widths: [f64; 2],
    /// Wire length.
    pub length: f64,
    /// Axial nodes, endpoints included.
    pub n_x: usize,
    pub p_max: f64,
    pub n_p: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_y: 16,
            n_z: [17, 17],
            widths: [1.0, 1.0],
            length: 4.0,
            n_x: 41,
            p_max: 8.0,
            n_p: 64,
        }
    }
}

/// Trapezoid weights for `n` uniformly spaced nodes with spacing `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    if n > 0 {
        w[0] = 0.5 * h;
        w[n - 1] = 0.5 * h;
    }
    w
}

/// The rectangular cross-section `(0, a1) x (0, a2)` and its node lattice.
///
/// Nodes are stored with the first axis fastest: `index = i1 + n1 * i2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub widths: [f64; 2],
    pub nodes: [usize; 2],
}

impl CrossSection {
    pub fn new(widths: [f64; 2], nodes: [usize; 2]) -> Result<Self> {
        for a in 0..2 {
            if !(widths[a] > 0.0) || !widths[a].is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "cross-section width {} must be positive, got {}",
                    a + 1,
                    widths[a]
                )));
            }
            if nodes[a] < 3 {
                return Err(Error::InvalidGrid(format!(
                    "cross-section direction {} needs at least 3 nodes, got {}",
                    a + 1,
                    nodes[a]
                )));
            }
        }
        Ok(Self { widths, nodes })
    }

    pub fn spacing(&self) -> [f64; 2] {
        [
            self.widths[0] / (self.nodes[0] - 1) as f64,
            self.widths[1] / (self.nodes[1] - 1) as f64,
        ]
    }

    pub fn len(&self) -> usize {
        self.nodes[0] * self.nodes[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn area(&self) -> f64 {
        self.widths[0] * self.widths[1]
    }

    #[inline]
    pub fn index(&self, i1: usize, i2: usize) -> usize {
        i1 + self.nodes[0] * i2
    }

    pub fn coordinates(&self, i1: usize, i2: usize) -> [f64; 2] {
        let h = self.spacing();
        [i1 as f64 * h[0], i2 as f64 * h[1]]
    }

    /// Trapezoid weights on the full node lattice.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let w1 = trapezoid_weights(self.nodes[0], h[0]);
        let w2 = trapezoid_weights(self.nodes[1], h[1]);
        let mut w = Vec::with_capacity(self.len());
        for b in &w2 {
            for a in &w1 {
                w.push(a * b);
            }
        }
        w
    }

    /// Whether node `(i1, i2)` lies on the cross-section boundary.
    pub fn on_boundary(&self, i1: usize, i2: usize) -> bool {
        i1 == 0 || i2 == 0 || i1 + 1 == self.nodes[0] || i2 + 1 == self.nodes[1]
    }

    pub fn integrate(&self, field: &[f64]) -> f64 {
        debug_assert_eq!(field.len(), self.len());
        self.weights().iter().zip(field).map(|(w, f)| w * f).sum()
    }
}

/// Discretization of the unit cell `(-1/2, 1/2) x ω_z`.
///
/// Unknowns live on the interior cross-section nodes and all `n_y` periodic
/// nodes, stored with `y` fastest: `index = iy + n_y * (j1 + m1 * j2)` where
/// `j1, j2` count interior nodes (`m1 = n1 - 2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitCellGrid {
    pub n_y: usize,
    pub cross: CrossSection,
}

impl UnitCellGrid {
    pub fn new(n_y: usize, cross: CrossSection) -> Result<Self> {
        if n_y < 3 {
            return Err(Error::InvalidGrid(format!(
                "periodic direction needs at least 3 nodes, got {n_y}"
            )));
        }
        Ok(Self { n_y, cross })
    }

    pub fn h_y(&self) -> f64 {
        1.0 / self.n_y as f64
    }

    pub fn y(&self, iy: usize) -> f64 {
        -0.5 + iy as f64 * self.h_y()
    }

    /// Interior node counts across the cross-section.
    pub fn interior(&self) -> [usize; 2] {
        [self.cross.nodes[0] - 2, self.cross.nodes[1] - 2]
    }

    pub fn unknowns(&self) -> usize {
        let m = self.interior();
        self.n_y * m[0] * m[1]
    }

    #[inline]
    pub fn index(&self, iy: usize, j1: usize, j2: usize) -> usize {
        let m = self.interior();
        iy + self.n_y * (j1 + m[0] * j2)
    }

    /// Quadrature weight of every unknown (uniform: `h_y h_1 h_2`).
    pub fn cell_volume(&self) -> f64 {
        let h = self.cross.spacing();
        self.h_y() * h[0] * h[1]
    }

    /// Sum of all trapezoid cell volumes over the full node lattice.
    pub fn total_volume(&self) -> f64 {
        // One period has length exactly 1, so this is the cross-section area.
        self.h_y() * self.n_y as f64 * self.cross.weights().iter().sum::<f64>()
    }

    /// Physical coordinates `(y, z1, z2)` of an unknown.
    pub fn coordinates(&self, iy: usize, j1: usize, j2: usize) -> [f64; 3] {
        let z = self.cross.coordinates(j1 + 1, j2 + 1);
        [self.y(iy), z[0], z[1]]
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.cell_volume() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }
}

/// Discretization of the device `[0, L] x ω_z`.
///
/// Fields are stored slice by slice: `index = iz + n_z * ix` with `iz` the
/// cross-section index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceGrid {
    pub length: f64,
    pub n_x: usize,
    pub cross: CrossSection,
}

impl DeviceGrid {
    pub fn new(length: f64, n_x: usize, cross: CrossSection) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "wire length must be positive, got {length}"
            )));
        }
        if n_x < 3 {
            return Err(Error::InvalidGrid(format!(
                "axial direction needs at least 3 nodes, got {n_x}"
            )));
        }
        Ok(Self { length, n_x, cross })
    }

    pub fn h_x(&self) -> f64 {
        self.length / (self.n_x - 1) as f64
    }

    pub fn x(&self, ix: usize) -> f64 {
        ix as f64 * self.h_x()
    }

    pub fn axial_nodes(&self) -> Vec<f64> {
        (0..self.n_x).map(|i| self.x(i)).collect()
    }

    pub fn axial_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.n_x, self.h_x())
    }

    pub fn len(&self) -> usize {
        self.n_x * self.cross.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, ix: usize, iz: usize) -> usize {
        iz + self.cross.len() * ix
    }

    pub fn slice<'a>(&self, field: &'a [f64], ix: usize) -> &'a [f64] {
        let nz = self.cross.len();
        &field[ix * nz..(ix + 1) * nz]
    }

    /// Samples `f(x, z1, z2)` on every node.
    pub fn sample(&self, f: impl Fn(f64, f64, f64) -> f64) -> Vec<f64> {
        let [n1, n2] = self.cross.nodes;
        let mut out = Vec::with_capacity(self.len());
        for ix in 0..self.n_x {
            let x = self.x(ix);
            for i2 in 0..n2 {
                for i1 in 0..n1 {
                    let z = self.cross.coordinates(i1, i2);
                    out.push(f(x, z[0], z[1]));
                }
            }
        }
        out
    }

    /// Tensor trapezoid weights on every node.
    pub fn weights(&self) -> Vec<f64> {
        let wz = self.cross.weights();
        let mut out = Vec::with_capacity(self.len());
        for wx in self.axial_weights() {
            out.extend(wz.iter().map(|w| w * wx));
        }
        out
    }
}

/// Uniform momentum grid symmetric about `p = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumGrid {
    pub p_max: f64,
    pub n_p: usize,
}

impl MomentumGrid {
    pub fn new(p_max: f64, n_p: usize) -> Result<Self> {
        if !(p_max > 0.0) || !p_max.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "p_max must be positive, got {p_max}"
            )));
        }
        if n_p < 3 {
            return Err(Error::InvalidGrid(format!(
                "momentum grid needs at least 3 nodes, got {n_p}"
            )));
        }
        Ok(Self { p_max, n_p })
    }

    pub fn h_p(&self) -> f64 {
        2.0 * self.p_max / (self.n_p - 1) as f64
    }

    /// Node `j`. Computed as an odd integer multiple of `h/2` so that
    /// `node(n_p - 1 - j) == -node(j)` holds bitwise.
    #[inline]
    pub fn node(&self, j: usize) -> f64 {
        let k = 2 * j as i64 - (self.n_p as i64 - 1);
        k as f64 * (0.5 * self.h_p())
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_p).map(|j| self.node(j)).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        trapezoid_weights(self.n_p, self.h_p())
    }

    /// Index of the node mirrored through `p = 0`.
    #[inline]
    pub fn mirror(&self, j: usize) -> usize {
        self.n_p - 1 - j
    }

    /// Trapezoid quadrature with mirrored terms summed first, so any grid
    /// function with `f(-p) = -f(p)` integrates to exactly zero.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.n_p);
        let w = self.weights();
        let half = self.n_p / 2;
        let mut acc = 0.0;
        for j in 0..half {
            acc += w[j] * (f[j] + f[self.mirror(j)]);
        }
        if self.n_p % 2 == 1 {
            acc += w[half] * f[half];
        }
        acc
    }
}

pub fn build_grids(config: &GridConfig) -> Result<(UnitCellGrid, DeviceGrid, MomentumGrid)> {
    let cross = CrossSection::new(config.widths, config.n_z)?;
    let cell = UnitCellGrid::new(config.n_y, cross.clone())?;
    let device = DeviceGrid::new(config.length, config.n_x, cross)?;
    let momentum = MomentumGrid::new(config.p_max, config.n_p)?;
    Ok((cell, device, momentum))
}

/// Norms evaluated with trapezoid quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    L1,
    L2,
    /// L2 plus the squared gradient; differences are taken edge-wise, which
    /// makes them one-sided at the boundary.
    H1,
    /// H1 plus second differences (interior stencils and mixed edge terms).
    H2,
    /// Sup over the axial nodes of the cross-section L2 norm. For axial
    /// fields this is the plain maximum norm.
    LinfXL2z,
}

fn axial_gradient_sq(field: &[f64], h: f64) -> f64 {
    field
        .windows(2)
        .map(|w| {
            let d = (w[1] - w[0]) / h;
            h * d * d
        })
        .sum()
}

fn axial_second_sq(field: &[f64], h: f64) -> f64 {
    field
        .windows(3)
        .map(|w| {
            let d = (w[2] - 2.0 * w[1] + w[0]) / (h * h);
            h * d * d
        })
        .sum()
}

/// Norm of a field living on the axial nodes of `grid`.
pub fn axial_norm(field: &[f64], grid: &DeviceGrid, which: Norm) -> Result<f64> {
    check_len("axial field", grid.n_x, field.len())?;
    let w = grid.axial_weights();
    let h = grid.h_x();
    let l2sq = || w.iter().zip(field).map(|(w, f)| w * f * f).sum::<f64>();
    Ok(match which {
        Norm::L1 => w.iter().zip(field).map(|(w, f)| w * f.abs()).sum(),
        Norm::L2 => l2sq().sqrt(),
        Norm::H1 => (l2sq() + axial_gradient_sq(field, h)).sqrt(),
        Norm::H2 => {
            (l2sq() + axial_gradient_sq(field, h) + axial_second_sq(field, h)).sqrt()
        }
        Norm::LinfXL2z => field.iter().fold(0.0_f64, |m, f| m.max(f.abs())),
    })
}

/// Norm of a field living on every node of `grid`.
pub fn device_norm(field: &[f64], grid: &DeviceGrid, which: Norm) -> Result<f64> {
    check_len("device field", grid.len(), field.len())?;
    let w = grid.weights();
    let l2sq = || w.iter().zip(field).map(|(w, f)| w * f * f).sum::<f64>();
    Ok(match which {
        Norm::L1 => w.iter().zip(field).map(|(w, f)| w * f.abs()).sum(),
        Norm::L2 => l2sq().sqrt(),
        Norm::H1 => (l2sq() + gradient_sq(field, grid)).sqrt(),
        Norm::H2 => (l2sq() + gradient_sq(field, grid) + hessian_sq(field, grid)).sqrt(),
        Norm::LinfXL2z => {
            let wz = grid.cross.weights();
            (0..grid.n_x)
                .map(|ix| {
                    let s = grid.slice(field, ix);
                    wz.iter().zip(s).map(|(w, f)| w * f * f).sum::<f64>().sqrt()
                })
                .fold(0.0, f64::max)
        }
    })
}

/// `∫ |∇f|²` with edge differences; each edge carries the trapezoid weights
/// of the directions it does not span.
pub fn gradient_sq(field: &[f64], grid: &DeviceGrid) -> f64 {
    let [n1, n2] = grid.cross.nodes;
    let [h1, h2] = grid.cross.spacing();
    let hx = grid.h_x();
    let wx = grid.axial_weights();
    let w1 = trapezoid_weights(n1, h1);
    let w2 = trapezoid_weights(n2, h2);
    let at = |ix: usize, i1: usize, i2: usize| field[grid.index(ix, grid.cross.index(i1, i2))];
    let mut acc = 0.0;
    for ix in 0..grid.n_x {
        for i2 in 0..n2 {
            for i1 in 0..n1 {
                let f = at(ix, i1, i2);
                if ix + 1 < grid.n_x {
                    let d = (at(ix + 1, i1, i2) - f) / hx;
                    acc += hx * w1[i1] * w2[i2] * d * d;
                }
                if i1 + 1 < n1 {
                    let d = (at(ix, i1 + 1, i2) - f) / h1;
                    acc += wx[ix] * h1 * w2[i2] * d * d;
                }
                if i2 + 1 < n2 {
                    let d = (at(ix, i1, i2 + 1) - f) / h2;
                    acc += wx[ix] * w1[i1] * h2 * d * d;
                }
            }
        }
    }
    acc
}

fn hessian_sq(field: &[f64], grid: &DeviceGrid) -> f64 {
    let [n1, n2] = grid.cross.nodes;
    let [h1, h2] = grid.cross.spacing();
    let hx = grid.h_x();
    let wx = grid.axial_weights();
    let w1 = trapezoid_weights(n1, h1);
    let w2 = trapezoid_weights(n2, h2);
    let at = |ix: usize, i1: usize, i2: usize| field[grid.index(ix, grid.cross.index(i1, i2))];
    let mut acc = 0.0;
    for ix in 0..grid.n_x {
        for i2 in 0..n2 {
            for i1 in 0..n1 {
                let f = at(ix, i1, i2);
                if ix > 0 && ix + 1 < grid.n_x {
                    let d = (at(ix + 1, i1, i2) - 2.0 * f + at(ix - 1, i1, i2)) / (hx * hx);
                    acc += hx * w1[i1] * w2[i2] * d * d;
                }
                if i1 > 0 && i1 + 1 < n1 {
                    let d = (at(ix, i1 + 1, i2) - 2.0 * f + at(ix, i1 - 1, i2)) / (h1 * h1);
                    acc += wx[ix] * h1 * w2[i2] * d * d;
                }
                if i2 > 0 && i2 + 1 < n2 {
                    let d = (at(ix, i1, i2 + 1) - 2.0 * f + at(ix, i1, i2 - 1)) / (h2 * h2);
                    acc += wx[ix] * w1[i1] * h2 * d * d;
                }
                // Mixed derivatives on cells, counted twice as in |D²f|².
                if ix + 1 < grid.n_x && i1 + 1 < n1 {
                    let d = (at(ix + 1, i1 + 1, i2) - at(ix + 1, i1, i2) - at(ix, i1 + 1, i2) + f)
                        / (hx * h1);
                    acc += 2.0 * hx * h1 * w2[i2] * d * d;
                }
                if ix + 1 < grid.n_x && i2 + 1 < n2 {
                    let d = (at(ix + 1, i1, i2 + 1) - at(ix + 1, i1, i2) - at(ix, i1, i2 + 1) + f)
                        / (hx * h2);
                    acc += 2.0 * hx * w1[i1] * h2 * d * d;
                }
                if i1 + 1 < n1 && i2 + 1 < n2 {
                    let d = (at(ix, i1 + 1, i2 + 1) - at(ix, i1 + 1, i2) - at(ix, i1, i2 + 1) + f)
                        / (h1 * h2);
                    acc += 2.0 * wx[ix] * h1 * h2 * d * d;
                }
            }
        }
    }
    acc
}

/// Centered periodic difference `(f[j+1] - f[j-1]) / 2h` along `y`.
pub fn periodic_derivative_y(grid: &UnitCellGrid, f: &[f64]) -> Vec<f64> {
    let n = grid.n_y;
    let scale = 0.5 / grid.h_y();
    let mut out = vec![0.0; f.len()];
    for (chunk_in, chunk_out) in f.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
        for iy in 0..n {
            let next = chunk_in[(iy + 1) % n];
            let prev = chunk_in[(iy + n - 1) % n];
            chunk_out[iy] = (next - prev) * scale;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_square(n: usize) -> CrossSection {
        CrossSection::new([1.0, 1.0], [n, n]).unwrap()
    }

    #[test]
    fn unit_cell_volume_is_cross_section_area() {
        let cfg = GridConfig {
            n_y: 8,
            n_z: [9, 9],
            ..GridConfig::default()
        };
        let (cell, _, _) = build_grids(&cfg).unwrap();
        assert_abs_diff_eq!(cell.h_y(), 0.125);
        assert_abs_diff_eq!(cell.cross.spacing()[0], 0.125);
        assert_abs_diff_eq!(cell.total_volume(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn momentum_nodes_are_symmetric() {
        let g = MomentumGrid::new(2.0, 5).unwrap();
        assert_eq!(g.nodes(), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        let g = MomentumGrid::new(8.0, 64).unwrap();
        for j in 0..64 {
            assert_eq!(g.node(j), -g.node(g.mirror(j)));
        }
    }

    #[test]
    fn odd_integrals_vanish_bitwise() {
        for n_p in [5, 17, 64] {
            let g = MomentumGrid::new(3.7, n_p).unwrap();
            let f: Vec<f64> = g.nodes().iter().map(|p| p * (-p * p / 2.3).exp() + p.powi(3)).collect();
            assert_eq!(g.integrate(&f), 0.0);
        }
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let cfg = GridConfig {
            n_x: 2,
            ..GridConfig::default()
        };
        assert!(matches!(build_grids(&cfg), Err(Error::InvalidGrid(_))));
        let cfg = GridConfig {
            length: 0.0,
            ..GridConfig::default()
        };
        assert!(build_grids(&cfg).is_err());
        let cfg = GridConfig {
            p_max: -1.0,
            ..GridConfig::default()
        };
        assert!(build_grids(&cfg).is_err());
        assert!(UnitCellGrid::new(2, unit_square(5)).is_err());
    }

    #[test]
    fn trapezoid_is_exact_for_bilinear() {
        let grid = DeviceGrid::new(2.0, 7, CrossSection::new([1.0, 3.0], [5, 4]).unwrap()).unwrap();
        let f = grid.sample(|x, z1, z2| 1.0 + 2.0 * x + 3.0 * z1 - z2 + x * z1 * z2);
        let w = grid.weights();
        let integral: f64 = w.iter().zip(&f).map(|(w, f)| w * f).sum();
        // ∫ over [0,2]x[0,1]x[0,3]
        let exact = 6.0 + 2.0 * 6.0 + 3.0 * 3.0 - 9.0 + 2.0 * 0.5 * 4.5;
        assert_abs_diff_eq!(integral, exact, epsilon = 1e-12);
    }

    #[test]
    fn axial_norm_examples() {
        let grid = DeviceGrid::new(1.0, 11, unit_square(3)).unwrap();
        let one = vec![1.0; 11];
        assert_abs_diff_eq!(axial_norm(&one, &grid, Norm::L1).unwrap(), 1.0, epsilon = 1e-15);
        let zero = vec![0.0; 11];
        assert_eq!(axial_norm(&zero, &grid, Norm::H1).unwrap(), 0.0);
        assert!(axial_norm(&one[..5], &grid, Norm::L2).is_err());
    }

    #[test]
    fn sine_l2_norm_converges_at_second_order() {
        let length = 3.0;
        let exact = (length / 2.0_f64).sqrt();
        let err = |n: usize| {
            let grid = DeviceGrid::new(length, n, unit_square(3)).unwrap();
            let f: Vec<f64> = grid
                .axial_nodes()
                .iter()
                .map(|x| (std::f64::consts::PI * x / length).sin())
                .collect();
            (axial_norm(&f, &grid, Norm::L2).unwrap() - exact).abs()
        };
        let (e1, e2) = (err(11), err(21));
        // Trapezoid on sin² is in fact spectrally accurate here; only require O(h²).
        assert!(e1 < 0.1 / 100.0 && e2 <= e1 + 1e-15);
    }

    #[test]
    fn periodic_derivative_annihilates_constants() {
        let cell = UnitCellGrid::new(7, unit_square(5)).unwrap();
        let f = vec![3.25; cell.unknowns()];
        assert!(periodic_derivative_y(&cell, &f).iter().all(|d| *d == 0.0));
    }

    #[test]
    fn device_h1_of_linear_field() {
        let grid = DeviceGrid::new(2.0, 9, CrossSection::new([1.0, 1.0], [5, 5]).unwrap()).unwrap();
        let f = grid.sample(|x, _, _| x);
        // ∫ x² + 1 over [0,2]x(0,1)²; trapezoid overestimates ∫x² by h²L/6.
        let h1 = device_norm(&f, &grid, Norm::H1).unwrap();
        let h = grid.h_x();
        let expected = (8.0 / 3.0 + h * h * 2.0 / 6.0 + 2.0).sqrt();
        assert_abs_diff_eq!(h1, expected, epsilon = 1e-12);
        let linf = device_norm(&f, &grid, Norm::LinfXL2z).unwrap();
        assert_abs_diff_eq!(linf, 2.0, epsilon = 1e-12);
    }
}
