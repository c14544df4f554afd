use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use super::*;
use crate::grids::CrossSection;

fn cell(n_y: usize, n_z: usize) -> UnitCellGrid {
    UnitCellGrid::new(n_y, CrossSection::new([1.0, 1.0], [n_z, n_z]).unwrap()).unwrap()
}

fn spectrum(potential: &LatticePotential, n_bands: usize) -> BlochSpectrum {
    let h = assemble_hamiltonian(potential, potential.grid()).unwrap();
    solve_bloch(&h, n_bands, EigenOptions::default()).unwrap()
}

fn sorted_dense_eigen(h: &Hamiltonian) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(h.to_dense());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Dense periodic centered difference in `y`, independent of the grid helper.
fn dense_dy(grid: &UnitCellGrid) -> DMatrix<f64> {
    let n = grid.unknowns();
    let mut d = DMatrix::zeros(n, n);
    let c = 0.5 / grid.h_y();
    for k in 0..n {
        let iy = k % grid.n_y;
        let base = k - iy;
        d[(k, base + (iy + 1) % grid.n_y)] += c;
        d[(k, base + (iy + grid.n_y - 1) % grid.n_y)] -= c;
    }
    d
}

#[test]
fn lattice_potential_rejects_negative_values() {
    let g = cell(4, 5);
    let err = LatticePotential::constant(&g, -1.0).unwrap_err();
    assert!(err.to_string().contains("Assumption 1.1"), "{err}");
}

#[test]
fn matches_dense_spectrum_on_coarse_grid() {
    let g = cell(6, 6);
    let w = LatticePotential::from_fn(&g, |y, z1, _| 1.0 + 0.5 * (2.0 * PI * y).cos() + z1).unwrap();
    let h = assemble_hamiltonian(&w, &g).unwrap();
    let s = solve_bloch(&h, 6, EigenOptions::default()).unwrap();
    let (dense, _) = sorted_dense_eigen(&h);
    for (a, b) in s.energies.iter().zip(&dense) {
        assert!((a - b).abs() < 1e-9 * b, "{a} vs {b}");
    }
    for r in &s.residuals {
        assert!(*r <= 1e-9);
    }
}

#[test]
fn eigenfunctions_are_orthonormal_in_cell_quadrature() {
    let g = cell(8, 7);
    let w = LatticePotential::from_fn(&g, |y, _, z2| 2.0 + (2.0 * PI * y).sin() * z2).unwrap();
    let s = spectrum(&w, 5);
    for a in 0..5 {
        for b in 0..5 {
            let ip = g.inner(&s.eigenfunctions[a], &s.eigenfunctions[b]);
            let target = if a == b { 1.0 } else { 0.0 };
            assert!((ip - target).abs() < 1e-8, "<{a},{b}> = {ip}");
        }
    }
}

#[test]
fn free_spectrum_agrees_with_closed_form() {
    let g = cell(8, 9);
    let w = LatticePotential::constant(&g, 0.0).unwrap();
    let s = spectrum(&w, 5);
    for (a, b) in s.energies.iter().zip(&s.free_energies) {
        assert!((a - b).abs() < 1e-9 * b);
    }
}

#[test]
fn nonnegative_potential_raises_every_level() {
    let g = cell(6, 7);
    let free = spectrum(&LatticePotential::constant(&g, 0.0).unwrap(), 4);
    let w = LatticePotential::from_fn(&g, |y, z1, z2| (y * 7.0).sin().abs() * z1 * z2).unwrap();
    let s = spectrum(&w, 4);
    for (e, l) in s.energies.iter().zip(&free.energies) {
        assert!(e >= &(l - 1e-10));
    }
}

#[test]
fn gradient_matrix_is_antisymmetric_and_vanishes_for_ground_free_band() {
    let g = cell(8, 7);
    let s = spectrum(&LatticePotential::constant(&g, 0.0).unwrap(), 5);
    let p = gradient_matrix_elements(&s);
    for a in 0..5 {
        assert_eq!(p.values[(a, a)], 0.0);
        for b in 0..5 {
            assert_eq!(p.values[(a, b)], -p.values[(b, a)]);
        }
        assert!(p.values[(0, a)].abs() < 1e-9);
    }
}

#[test]
fn free_ground_band_has_unit_mass() {
    let g = cell(8, 7);
    let s = spectrum(&LatticePotential::constant(&g, 0.0).unwrap(), 3);
    let bands = BandStructure::from_spectrum(&s, 1e-6).unwrap();
    assert!((bands.masses[0] - 1.0).abs() < 1e-10);
}

#[test]
fn coupled_degenerate_pair_is_an_error() {
    // With W = 0 the y-modes cos(2πy) and sin(2πy) are degenerate and
    // coupled by the derivative.
    let g = cell(10, 9);
    let s = spectrum(&LatticePotential::constant(&g, 0.0).unwrap(), 5);
    let p = gradient_matrix_elements(&s);
    let err = effective_masses(&s, &p, 1e-6).unwrap_err();
    assert!(matches!(err, Error::DegenerateCoupledBands { first: 4, second: 5, .. }), "{err}");
}

#[test]
fn effective_mass_matches_dense_evaluation() {
    let g = cell(8, 6);
    let w = LatticePotential::from_fn(&g, |y, _, _| 1.0 + 0.5 * (2.0 * PI * y).cos()).unwrap();
    let h = assemble_hamiltonian(&w, &g).unwrap();
    let n_b = 8;
    let s = solve_bloch(&h, n_b, EigenOptions::default()).unwrap();
    let p = gradient_matrix_elements(&s);
    let m = effective_masses(&s, &p, 1e-6).unwrap();

    let (values, vectors) = sorted_dense_eigen(&h);
    // Truncation must not split a degenerate cluster.
    assert!(values[n_b] - values[n_b - 1] > 1e-6);
    let d = dense_dy(&g);
    let chi = vectors.columns(0, n_b).into_owned();
    let pd = chi.transpose() * &d * &chi;
    let mut inv = 1.0;
    for b in 1..n_b {
        inv -= 2.0 * pd[(0, b)] * pd[(b, 0)] / (values[0] - values[b]);
    }
    let dense_mass = 1.0 / inv;
    assert!((m.values[0] - dense_mass).abs() < 1e-6, "{} vs {dense_mass}", m.values[0]);
    assert!((m.values[0] - 1.0).abs() > 5e-4);
}

#[test]
fn confinement_densities_are_normalized_and_match_free_ground_mode() {
    let g = cell(6, 33);
    let s = spectrum(&LatticePotential::constant(&g, 0.0).unwrap(), 3);
    let dens = confinement_densities(&s);
    for gn in &dens {
        assert!((g.cross.integrate(gn) - 1.0).abs() < 1e-10);
        assert!(gn.iter().all(|v| *v >= 0.0));
    }
    let mut err: f64 = 0.0;
    for i2 in 0..33 {
        for i1 in 0..33 {
            let [z1, z2] = g.cross.coordinates(i1, i2);
            let exact = 4.0 * (PI * z1).sin().powi(2) * (PI * z2).sin().powi(2);
            err = err.max((dens[0][g.cross.index(i1, i2)] - exact).abs());
        }
    }
    assert!(err < 1e-2, "{err}");
}

#[test]
fn truncation_bound_matches_direct_summation() {
    // Direct summation of the closed-form spectrum over a generous box.
    let mut all = Vec::new();
    for k in -30_i64..=30 {
        for p in 1..=30_i64 {
            for q in 1..=30_i64 {
                all.push(0.5 * ((2.0 * PI * k as f64).powi(2) + (PI * p as f64).powi(2) + (PI * q as f64).powi(2)));
            }
        }
    }
    all.sort_by(f64::total_cmp);
    let direct: f64 = all[1..].iter().map(|l| (-l).exp() * l * l).sum();
    let bound = band_truncation_bound([1.0, 1.0], 1, 0.0, 1.0).unwrap();
    assert!((bound - direct).abs() <= 1e-12 * direct, "{bound} vs {direct}");
    let lead = 2.5 * PI * PI;
    assert!(bound > 2.0 * (-lead).exp() * lead * lead);
}

#[test]
fn truncation_bound_is_monotone() {
    let mut last = f64::INFINITY;
    for lambda in [0.1, 0.2, 0.5, 1.0, 2.0, 4.0] {
        let b = band_truncation_bound([1.0, 1.0], 3, 0.0, lambda).unwrap();
        assert!(b < last);
        last = b;
    }
    let b0 = band_truncation_bound([1.0, 1.0], 3, 0.0, 0.5).unwrap();
    let b10 = band_truncation_bound([1.0, 1.0], 3, 10.0, 0.5).unwrap();
    assert!(b10 > b0);
    assert!(band_truncation_bound([1.0, 1.0], 3, 0.0, 0.0).is_err());
}

#[test]
fn free_rectangle_spectrum_lists_degenerate_levels() {
    let s = free_rectangle_spectrum([1.0, 1.0], 3.5 * PI * PI);
    let expect = [1.0, 2.5, 2.5, 3.0, 3.0];
    assert_eq!(s.len(), expect.len());
    for (a, b) in s.iter().zip(expect) {
        assert!((a - b * PI * PI).abs() < 1e-12);
    }
}
