use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{check_len, Error, Result};
use crate::grids::UnitCellGrid;
use crate::linalg::tensor_mode_transform;

use super::LatticePotential;

/// The cell Hamiltonian `-½Δ + W` with periodic coupling in `y` and the
/// Dirichlet boundary nodes of the cross-section eliminated.
///
/// Applied matrix-free with a 7-point stencil.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    grid: UnitCellGrid,
    potential: Vec<f64>,
    potential_sup: f64,
    /// `1 / (2 h²)` per direction `(y, z1, z2)`.
    half_inv_h2: [f64; 3],
}

pub fn assemble_hamiltonian(potential: &LatticePotential, grid: &UnitCellGrid) -> Result<Hamiltonian> {
    if potential.grid() != grid {
        return Err(Error::InvalidArgument(
            "lattice potential was sampled on a different unit-cell grid".into(),
        ));
    }
    check_len("lattice potential", grid.unknowns(), potential.samples().len())?;
    let [h1, h2] = grid.cross.spacing();
    let hy = grid.h_y();
    Ok(Hamiltonian {
        grid: grid.clone(),
        potential: potential.samples().to_vec(),
        potential_sup: potential.sup_norm(),
        half_inv_h2: [0.5 / (hy * hy), 0.5 / (h1 * h1), 0.5 / (h2 * h2)],
    })
}

impl Hamiltonian {
    pub fn grid(&self) -> &UnitCellGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.potential.len()
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn potential_sup(&self) -> f64 {
        self.potential_sup
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n_y = self.grid.n_y;
        let [m1, m2] = self.grid.interior();
        let [cy, c1, c2] = self.half_inv_h2;
        let diag = 2.0 * (cy + c1 + c2);
        let s1 = n_y;
        let s2 = n_y * m1;
        for j2 in 0..m2 {
            for j1 in 0..m1 {
                let base = n_y * (j1 + m1 * j2);
                for iy in 0..n_y {
                    let k = base + iy;
                    let up = base + (iy + 1) % n_y;
                    let down = base + (iy + n_y - 1) % n_y;
                    let mut acc = (diag + self.potential[k]) * x[k] - cy * (x[up] + x[down]);
                    if j1 > 0 {
                        acc -= c1 * x[k - s1];
                    }
                    if j1 + 1 < m1 {
                        acc -= c1 * x[k + s1];
                    }
                    if j2 > 0 {
                        acc -= c2 * x[k - s2];
                    }
                    if j2 + 1 < m2 {
                        acc -= c2 * x[k + s2];
                    }
                    out[k] = acc;
                }
            }
        }
    }

    /// Dense matrix of the operator; intended for small grids and checks.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            e[j] = 0.0;
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        m
    }
}

/// Exact inverse of `-½Δ_h + c` on the unit-cell grid for a constant `c`,
/// applied by diagonalizing each 1D second-difference operator.
#[derive(Debug, Clone)]
pub(crate) struct TensorInverse {
    n_y: usize,
    m: [usize; 2],
    basis: [DMatrix<f64>; 3],
    /// Eigenvalues of the 1D operators, already including the factor ½.
    values: [Vec<f64>; 3],
    shift: f64,
}

fn periodic_second_difference(n: usize, h: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let c = 1.0 / (h * h);
    for i in 0..n {
        m[(i, i)] += 2.0 * c;
        m[(i, (i + 1) % n)] -= c;
        m[(i, (i + n - 1) % n)] -= c;
    }
    m
}

fn dirichlet_second_difference(m: usize, h: f64) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(m, m);
    let c = 1.0 / (h * h);
    for i in 0..m {
        a[(i, i)] = 2.0 * c;
        if i + 1 < m {
            a[(i, i + 1)] = -c;
            a[(i + 1, i)] = -c;
        }
    }
    a
}

impl TensorInverse {
    pub fn new(grid: &UnitCellGrid, shift: f64) -> Self {
        let [h1, h2] = grid.cross.spacing();
        let m = grid.interior();
        let ops = [
            periodic_second_difference(grid.n_y, grid.h_y()),
            dirichlet_second_difference(m[0], h1),
            dirichlet_second_difference(m[1], h2),
        ];
        let eig = ops.map(SymmetricEigen::new);
        let values = [0, 1, 2].map(|a| eig[a].eigenvalues.iter().map(|v| 0.5 * v).collect::<Vec<_>>());
        let [e0, e1, e2] = eig;
        Self {
            n_y: grid.n_y,
            m,
            basis: [e0.eigenvectors, e1.eigenvectors, e2.eigenvectors],
            values,
            shift,
        }
    }

    /// Smallest eigenvalue of `-½Δ_h + shift`.
    pub fn lowest(&self) -> f64 {
        let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
        min(&self.values[0]) + min(&self.values[1]) + min(&self.values[2]) + self.shift
    }

    fn transform(&self, x: &[f64], forward: bool) -> Vec<f64> {
        let [sy, s1, s2] = &self.basis;
        tensor_mode_transform(x, [self.n_y, self.m[0], self.m[1]], [sy, s1, s2], forward)
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let mut hat = self.transform(r, true);
        let (n_y, [m1, _]) = (self.n_y, self.m);
        for (k, v) in hat.iter_mut().enumerate() {
            let iy = k % n_y;
            let j1 = (k / n_y) % m1;
            let j2 = k / (n_y * m1);
            *v /= self.values[0][iy] + self.values[1][j1] + self.values[2][j2] + self.shift;
        }
        z.copy_from_slice(&self.transform(&hat, false));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::CrossSection;

    fn grid(n_y: usize, n: usize) -> UnitCellGrid {
        UnitCellGrid::new(n_y, CrossSection::new([1.0, 1.0], [n, n]).unwrap()).unwrap()
    }

    #[test]
    fn free_operator_is_half_laplacian_and_symmetric() {
        let g = grid(4, 5);
        let w = LatticePotential::constant(&g, 0.0).unwrap();
        let h = assemble_hamiltonian(&w, &g).unwrap();
        let a = h.to_dense();
        assert_eq!((&a - a.transpose()).abs().max(), 0.0);
        // Row of an interior node: diagonal = ½(2/hy² + 2/h1² + 2/h2²).
        let k = g.index(1, 1, 1);
        let expected = 0.5 * (2.0 * 16.0 + 2.0 * 16.0 + 2.0 * 16.0);
        assert_eq!(a[(k, k)], expected);
        assert_eq!(a[(k, g.index(2, 1, 1))], -0.5 * 16.0);
    }

    #[test]
    fn constant_potential_shifts_spectrum() {
        let g = grid(4, 5);
        let h0 = assemble_hamiltonian(&LatticePotential::constant(&g, 0.0).unwrap(), &g).unwrap();
        let h10 = assemble_hamiltonian(&LatticePotential::constant(&g, 10.0).unwrap(), &g).unwrap();
        let e0 = SymmetricEigen::new(h0.to_dense()).eigenvalues;
        let e10 = SymmetricEigen::new(h10.to_dense()).eigenvalues;
        let mut a: Vec<f64> = e0.iter().cloned().collect();
        let mut b: Vec<f64> = e10.iter().cloned().collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            assert!((y - x - 10.0).abs() < 1e-10);
        }
    }

    #[test]
    fn tensor_inverse_inverts_free_operator() {
        let g = grid(6, 7);
        let shift = 0.75;
        let h = assemble_hamiltonian(&LatticePotential::constant(&g, shift).unwrap(), &g).unwrap();
        let inv = TensorInverse::new(&g, shift);
        let r: Vec<f64> = (0..h.dim()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let mut z = vec![0.0; h.dim()];
        inv.apply(&r, &mut z);
        let mut back = vec![0.0; h.dim()];
        h.apply(&z, &mut back);
        let err = back.iter().zip(&r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }
}
