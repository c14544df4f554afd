use nanowire_core::bloch::{assemble_hamiltonian, solve_bloch, BandStructure, EigenOptions, LatticePotential};
use nanowire_core::electrostatics::{BoundaryPotential, Direction};
use nanowire_core::grids::{CrossSection, DeviceGrid, UnitCellGrid};
use nanowire_core::selfconsistent::{
    converge_gummel, run_transient, Device, DiffusionModel, GummelOptions, GummelState, SelfConsistentConfig,
};
use nanowire_core::transport::current;

/// A weak periodic lattice, its lowest three Bloch bands, and a short wire
/// built on top of them.
fn lattice_device() -> Device {
    let cross = CrossSection::new([1.0, 1.0], [9, 9]).unwrap();
    let cell = UnitCellGrid::new(8, cross.clone()).unwrap();
    let potential = LatticePotential::from_fn(&cell, |y, _, _| 0.5 + 0.3 * (2.0 * std::f64::consts::PI * y).cos()).unwrap();
    let h = assemble_hamiltonian(&potential, &cell).unwrap();
    let spectrum = solve_bloch(&h, 3, EigenOptions::default()).unwrap();
    let bands = BandStructure::from_spectrum(&spectrum, 1e-6).unwrap();
    Device {
        grid: DeviceGrid::new(1.0, 21, cross.clone()).unwrap(),
        boundary: BoundaryPotential::uniform(&cross, 0.1),
        bands,
    }
}

fn config(dt: Option<f64>, steps: usize) -> SelfConsistentConfig {
    SelfConsistentConfig {
        boundary_density: 0.5,
        dt,
        steps,
        diffusion: DiffusionModel::Relaxation { tau: 1.0 },
        gummel: GummelOptions {
            tol: 1e-11,
            ..GummelOptions::default()
        },
        newton: Default::default(),
    }
}

#[test]
fn transient_relaxes_onto_the_steady_state() {
    let dev = lattice_device();
    let problem = dev.problem(0.0, Direction::Both).unwrap();

    let steady_cfg = config(None, 0);
    let start = GummelState::new(vec![0.5; dev.grid.n_x], &problem, &steady_cfg).unwrap();
    let steady = converge_gummel(&start, &start.ns.clone(), &problem, &steady_cfg).unwrap();

    let initial: Vec<f64> = dev
        .grid
        .axial_nodes()
        .iter()
        .map(|x| 0.5 + 2.0 * (-((x - 0.5) / 0.15).powi(2)).exp())
        .collect();
    let run = run_transient(&initial, &problem, &config(Some(0.05), 40)).unwrap();

    let last = run.densities.last().unwrap();
    let gap = last.iter().zip(&steady.ns).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap < 1e-4, "distance to the steady state {gap:e}");

    let report = &run.report;
    assert!(report.max_entropy_increase() <= 1e-10);
    assert!(report.within_envelope());
    // The extension is not the equilibrium, so W levels off at a positive
    // value instead of reaching zero.
    let w = &report.entropy;
    let tail = w[w.len() - 2] - w[w.len() - 1];
    assert!(tail < 1e-6 * (w[0] - w[w.len() - 1]), "entropy still moving: {w:?}");
    assert!(run.densities.iter().flatten().all(|n| *n > 0.0));
}

#[test]
fn equilibrium_carries_no_current() {
    let dev = lattice_device();
    let problem = dev.problem(0.0, Direction::Both).unwrap();
    let cfg = config(None, 0);
    let start = GummelState::new(vec![0.5; dev.grid.n_x], &problem, &cfg).unwrap();
    let eq = converge_gummel(&start, &start.ns.clone(), &problem, &cfg).unwrap();
    let flux = current(&eq.ns, &eq.effective.vs, &eq.diffusion, dev.grid.h_x()).unwrap();
    let worst = flux.iter().fold(0.0f64, |m, f| m.max(f.abs()));
    assert!(worst <= 1e-12, "equilibrium current {worst:e}");
}
