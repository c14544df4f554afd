//! One-dimensional drift-diffusion `∂_t N_s - ∂_x(D(∂_x N_s + N_s ∂_x V_s)) = 0`
//! on a uniform axial grid, discretized with Scharfetter-Gummel fluxes.
//!
//! Fluxes are particle fluxes: positive values move electrons toward
//! increasing `x`, so pure diffusion gives `F = -D ∂_x N_s`.

use crate::error::{check_len, Error, Result};
use crate::linalg::solve_tridiagonal;

/// `B(s) = s / (e^s - 1)` with `B(0) = 1`.
pub fn bernoulli(s: f64) -> f64 {
    if s.abs() < 1e-4 {
        // Taylor series: 1 - s/2 + s²/12 - s⁴/720.
        let s2 = s * s;
        1.0 - 0.5 * s + s2 / 12.0 * (1.0 - s2 / 60.0)
    } else if s > 700.0 {
        s * (-s).exp()
    } else {
        s / s.exp_m1()
    }
}

/// Scharfetter-Gummel flux between two neighbouring nodes with densities
/// `n_left`, `n_right` and effective potentials `vs_left`, `vs_right`:
/// `F = (D/h) [B(δ) N_left - B(-δ) N_right]`, `δ = V_s,right - V_s,left`.
///
/// It vanishes on the local equilibrium `N ∝ e^{-V_s}` for every `δ`.
pub fn sg_flux(n_left: f64, n_right: f64, vs_left: f64, vs_right: f64, d_face: f64, h: f64) -> f64 {
    let delta = vs_right - vs_left;
    d_face / h * (bernoulli(delta) * n_left - bernoulli(-delta) * n_right)
}

/// Harmonic mean, used for the diffusion coefficient on cell faces.
pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

fn check_inputs(n: usize, vs: &[f64], d: &[f64], h: f64) -> Result<()> {
    if n < 3 {
        return Err(Error::InvalidGrid(format!("need at least 3 axial nodes, got {n}")));
    }
    check_len("effective potential", n, vs.len())?;
    check_len("diffusion coefficient", n, d.len())?;
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("grid spacing must be positive, got {h}")));
    }
    if let Some((i, v)) = d.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::AssumptionViolated(format!(
            "diffusion coefficient must be bounded below by a positive constant (violates Assumption 3.1); \
             found {v} at node {i}"
        )));
    }
    Ok(())
}

/// Coefficients of the flux on face `i + ½`: `F = a N_i - b N_{i+1}`.
fn face_coefficients(vs: &[f64], d: &[f64], h: f64) -> Vec<(f64, f64)> {
    (0..vs.len() - 1)
        .map(|i| {
            let delta = vs[i + 1] - vs[i];
            let c = harmonic_mean(d[i], d[i + 1]) / h;
            (c * bernoulli(delta), c * bernoulli(-delta))
        })
        .collect()
}

/// Face conductances `c = (D/h) B(δ) e^{-V_s,left}` of the Slotboom form
/// `F = c (u_left - u_right)`.
fn conductances(vs: &[f64], d: &[f64], h: f64) -> Vec<f64> {
    (0..vs.len() - 1)
        .map(|i| {
            let delta = vs[i + 1] - vs[i];
            harmonic_mean(d[i], d[i + 1]) / h * bernoulli(delta) * (-vs[i]).exp()
        })
        .collect()
}

/// Interface fluxes `F_{i+½}` for `i = 0 .. n-2`, evaluated in the Slotboom
/// form so that equilibria give exactly cancelling terms.
pub fn current(ns: &[f64], vs: &[f64], d: &[f64], h: f64) -> Result<Vec<f64>> {
    check_inputs(ns.len(), vs, d, h)?;
    let u: Vec<f64> = ns.iter().zip(vs).map(|(n, v)| n * v.exp()).collect();
    Ok(conductances(vs, d, h)
        .iter()
        .enumerate()
        .map(|(i, c)| c * (u[i] - u[i + 1]))
        .collect())
}

/// Solves `c_i N_i + (F_{i+½} - F_{i-½}) / h = r_i` at interior nodes with
/// `N` pinned to `left`, `right` at the ends.
fn solve_balance(vs: &[f64], d: &[f64], h: f64, c: f64, rhs: &[f64], left: f64, right: f64) -> Result<Vec<f64>> {
    let n = vs.len();
    let faces = face_coefficients(vs, d, h);
    let mut lower = vec![0.0; n];
    let mut diag = vec![1.0; n];
    let mut upper = vec![0.0; n];
    let mut r = rhs.to_vec();
    r[0] = left;
    r[n - 1] = right;
    for i in 1..n - 1 {
        let (a_r, b_r) = faces[i];
        let (a_l, b_l) = faces[i - 1];
        diag[i] = c + (a_r + b_l) / h;
        upper[i] = -b_r / h;
        lower[i] = -a_l / h;
    }
    solve_tridiagonal(&lower, &diag, &upper, &r)
}

fn ensure_nonnegative(ns: &[f64]) -> Result<()> {
    match ns.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        Some((node, value)) => Err(Error::NegativeDensity { value: *value, node }),
        None => Ok(()),
    }
}

/// One backward-Euler step. The end values of `ns` are the Dirichlet data
/// and are carried over unchanged.
pub fn advance_density(ns: &[f64], vs: &[f64], d: &[f64], dt: f64, h: f64) -> Result<Vec<f64>> {
    advance_density_with_source(ns, vs, d, dt, h, None)
}

/// As [`advance_density`], with an optional source sampled at the new time.
pub fn advance_density_with_source(
    ns: &[f64],
    vs: &[f64],
    d: &[f64],
    dt: f64,
    h: f64,
    source: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let n = ns.len();
    check_inputs(n, vs, d, h)?;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let mut rhs: Vec<f64> = ns.iter().map(|v| v / dt).collect();
    if let Some(s) = source {
        check_len("source", n, s.len())?;
        for (r, s) in rhs.iter_mut().zip(s) {
            *r += s;
        }
    }
    let next = solve_balance(vs, d, h, 1.0 / dt, &rhs, ns[0], ns[n - 1])?;
    if source.is_none() {
        ensure_nonnegative(&next)?;
    }
    Ok(next)
}

/// Stationary solution with end values `left`, `right`.
///
/// In one dimension the discrete flux is a single constant `F`, and the
/// Slotboom differences satisfy `u_i - u_{i+1} = F / c_i`; summing these
/// fixes `F` and the profile follows by accumulation, without a linear solve.
pub fn steady_state(vs: &[f64], d: &[f64], left: f64, right: f64, h: f64) -> Result<Vec<f64>> {
    let n = vs.len();
    check_inputs(n, vs, d, h)?;
    let resistances: Vec<f64> = conductances(vs, d, h).iter().map(|c| 1.0 / c).collect();
    let u_left = left * vs[0].exp();
    let u_right = right * vs[n - 1].exp();
    let flux = (u_left - u_right) / resistances.iter().sum::<f64>();
    let mut ns = Vec::with_capacity(n);
    let mut u = u_left;
    ns.push(left);
    for (i, r) in resistances.iter().enumerate().take(n - 2) {
        u -= flux * r;
        ns.push(u * (-vs[i + 1]).exp());
    }
    ns.push(right);
    ensure_nonnegative(&ns)?;
    Ok(ns)
}

/// Diffusion coefficient for a constant cross-section `α = 1/τ`:
/// `D = τ Σ_n e^{-(E_n + V_nn)} / (m_n Z)`, with projected potentials
/// indexed `[n][x]`.
pub fn diffusion_constant_alpha(energies: &[f64], masses: &[f64], vnn: &[Vec<f64>], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("relaxation time must be positive, got {tau}")));
    }
    check_len("effective masses", energies.len(), masses.len())?;
    if let Some(m) = masses.iter().find(|m| !(**m > 0.0)) {
        return Err(Error::InvalidArgument(format!("effective masses must be positive, got {m}")));
    }
    let w = crate::electrostatics::band_weights(vnn, energies)?;
    let n_x = vnn.first().map_or(0, Vec::len);
    Ok((0..n_x)
        .map(|ix| tau * w.iter().zip(masses).map(|(w, m)| w[ix] / m).sum::<f64>())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bernoulli_identities() {
        assert_eq!(bernoulli(0.0), 1.0);
        for s in [1e-6, 1.0, 30.0] {
            let lhs = bernoulli(s) - bernoulli(-s);
            assert!((lhs + s).abs() <= 1e-14 * s.max(1.0), "{s}: {lhs}");
        }
        // Branch continuity.
        let a = bernoulli(0.99999e-4);
        let b = bernoulli(1.00001e-4);
        assert!((a - b).abs() < 1e-8);
        assert!(bernoulli(800.0) >= 0.0 && bernoulli(-800.0) == 800.0);
    }

    proptest! {
        #[test]
        fn bernoulli_is_positive_and_decreasing(s in -50.0_f64..50.0, ds in 1e-3_f64..1.0) {
            prop_assert!(bernoulli(s) > 0.0);
            prop_assert!(bernoulli(s + ds) < bernoulli(s));
        }

        #[test]
        fn flux_is_antisymmetric_under_reflection(
            nl in 0.0_f64..10.0, nr in 0.0_f64..10.0, vl in -20.0_f64..20.0, vr in -20.0_f64..20.0, d in 0.1_f64..5.0,
        ) {
            let f = sg_flux(nl, nr, vl, vr, d, 0.1);
            let g = sg_flux(nr, nl, vr, vl, d, 0.1);
            prop_assert!((f + g).abs() <= 1e-12 * (1.0 + f.abs()));
        }

        #[test]
        fn flux_vanishes_on_local_equilibrium(u in 0.01_f64..10.0, vl in -30.0_f64..30.0, vr in -30.0_f64..30.0) {
            let f = sg_flux(u * (-vl).exp(), u * (-vr).exp(), vl, vr, 1.3, 0.05);
            let scale = u * (-vl).exp().max((-vr).exp());
            prop_assert!(f.abs() <= 1e-12 * scale / 0.05);
        }
    }

    #[test]
    fn flux_examples() {
        assert_eq!(sg_flux(2.0, 2.0, 0.5, 0.5, 1.0, 0.1), 0.0);
        // Pure diffusion down a slope of -10.
        let f = sg_flux(2.0, 1.0, 0.0, 0.0, 3.0, 0.1);
        assert!((f - 30.0).abs() < 1e-12);
    }

    fn grid(n: usize, length: f64) -> (Vec<f64>, f64) {
        let h = length / (n - 1) as f64;
        ((0..n).map(|i| i as f64 * h).collect(), h)
    }

    #[test]
    fn constant_state_is_preserved() {
        let (x, h) = grid(21, 1.0);
        let ns = vec![1.5; x.len()];
        let next = advance_density(&ns, &vec![0.3; x.len()], &vec![1.0; x.len()], 0.01, h).unwrap();
        for v in next {
            assert!((v - 1.5).abs() < 1e-14);
        }
    }

    #[test]
    fn bump_deviation_decays_monotonically() {
        let (x, h) = grid(41, 1.0);
        let mut ns: Vec<f64> = x.iter().map(|x| 1.0 + 2.0 * (-(x - 0.5).powi(2) / 0.01).exp()).collect();
        let vs = vec![0.0; x.len()];
        let d = vec![1.0; x.len()];
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            ns = advance_density(&ns, &vs, &d, 1e-3, h).unwrap();
            let dev: f64 = ns.iter().map(|v| (v - 1.0).abs()).sum();
            assert!(dev < last);
            last = dev;
        }
    }

    #[test]
    fn steady_state_matches_closed_form_with_linear_potential() {
        // N' + a N = -F/D on (0,1) with constant flux F: N = C e^{-ax} - F/(aD).
        let (x, h) = grid(401, 1.0);
        let a = 3.0;
        let dcoef = 0.7;
        let vs: Vec<f64> = x.iter().map(|x| a * x).collect();
        let d = vec![dcoef; x.len()];
        let (left, right) = (2.0, 1.0);
        let ns = steady_state(&vs, &d, left, right, h).unwrap();
        // Solve for C and F from the end values.
        let e = (-a).exp();
        let f = (left * e - right) * a * dcoef / (1.0 - e);
        let c = left + f / (a * dcoef);
        let mut err: f64 = 0.0;
        for (xi, ni) in x.iter().zip(&ns) {
            err = err.max((ni - (c * (-a * xi).exp() - f / (a * dcoef))).abs());
        }
        assert!(err < 1e-4, "{err}");
        let j = current(&ns, &vs, &d, h).unwrap();
        assert!((j[0] - f).abs() < 1e-3 * f.abs());
    }

    #[test]
    fn steady_current_is_interface_constant() {
        let (x, h) = grid(101, 2.0);
        let vs: Vec<f64> = x.iter().map(|x| 4.0 * (3.0 * x).sin()).collect();
        let d: Vec<f64> = x.iter().map(|x| 1.0 + 0.5 * x).collect();
        let ns = steady_state(&vs, &d, 1.0, 0.3, h).unwrap();
        let j = current(&ns, &vs, &d, h).unwrap();
        let mean = j.iter().sum::<f64>() / j.len() as f64;
        for v in &j {
            assert!((v - mean).abs() <= 1e-10 * mean.abs(), "{v} {mean}");
        }
    }

    #[test]
    fn pure_diffusion_gives_linear_profile_and_flux() {
        let (x, h) = grid(11, 1.0);
        let ns = steady_state(&vec![0.0; x.len()], &vec![2.0; x.len()], 1.0, 3.0, h).unwrap();
        for (xi, ni) in x.iter().zip(&ns) {
            assert!((ni - (1.0 + 2.0 * xi)).abs() < 1e-13);
        }
        let j = current(&ns, &vec![0.0; x.len()], &vec![2.0; x.len()], h).unwrap();
        assert!(j.iter().all(|v| (v + 4.0).abs() < 1e-12));
        let flat = steady_state(&vec![0.0; x.len()], &vec![1.0; x.len()], 2.0, 2.0, h).unwrap();
        assert!(flat.iter().all(|v| (v - 2.0).abs() < 1e-14));
    }

    #[test]
    fn equilibrium_is_reproduced_exactly() {
        let (x, h) = grid(64, 1.0);
        let vs: Vec<f64> = x.iter().map(|x| 5.0 * (7.0 * x).cos() + 2.0 * x).collect();
        let u = 0.8;
        let eq: Vec<f64> = vs.iter().map(|v| u * (-v).exp()).collect();
        let d = vec![1.1; x.len()];
        let ns = steady_state(&vs, &d, eq[0], eq[eq.len() - 1], h).unwrap();
        for (a, b) in ns.iter().zip(&eq) {
            assert!((a - b).abs() <= 1e-12 * b);
        }
        let j = current(&eq, &vs, &d, h).unwrap();
        assert!(j.iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn randomized_steps_stay_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (x, h) = grid(33, 1.0);
        let mut negatives = 0;
        for _ in 0..200 {
            let ns: Vec<f64> = x.iter().map(|_| rng.random_range(0.0..5.0) * rng.random_range(0.0..1.0_f64).powi(3)).collect();
            let vs: Vec<f64> = x.iter().map(|_| rng.random_range(-20.0..20.0)).collect();
            let d: Vec<f64> = x.iter().map(|_| rng.random_range(0.1..3.0)).collect();
            let next = advance_density(&ns, &vs, &d, 10f64.powf(rng.random_range(-4.0..0.0)), h).unwrap();
            negatives += next.iter().filter(|v| **v < 0.0).count();
        }
        assert_eq!(negatives, 0);
    }

    #[test]
    fn transient_scheme_converges_at_second_order_in_space() {
        // N(t,x) = 1 + e^{-t} sin(πx) with V_s = x² and D = 1 + x/2.
        let exact = |t: f64, x: f64| 1.0 + (-t).exp() * (std::f64::consts::PI * x).sin();
        let pi = std::f64::consts::PI;
        let source = |t: f64, x: f64| {
            let e = (-t).exp();
            let n = exact(t, x);
            let nx = e * pi * (pi * x).cos();
            let nxx = -e * pi * pi * (pi * x).sin();
            let d = 1.0 + 0.5 * x;
            let dx = 0.5;
            // ∂_t N - ∂_x(D(N_x + 2x N)).
            let dflux = dx * (nx + 2.0 * x * n) + d * (nxx + 2.0 * n + 2.0 * x * nx);
            -e * (pi * x).sin() - dflux
        };
        let t_end = 0.1;
        let mut errors = Vec::new();
        for n in [21, 41, 81] {
            let (x, h) = grid(n, 1.0);
            let vs: Vec<f64> = x.iter().map(|x| x * x).collect();
            let d: Vec<f64> = x.iter().map(|x| 1.0 + 0.5 * x).collect();
            let steps = (t_end / (0.5 * h * h)).round() as usize;
            let dt = t_end / steps as f64;
            let mut ns: Vec<f64> = x.iter().map(|x| exact(0.0, *x)).collect();
            for k in 1..=steps {
                let t = k as f64 * dt;
                let s: Vec<f64> = x.iter().map(|x| source(t, *x)).collect();
                ns[0] = exact(t, 0.0);
                ns[n - 1] = exact(t, 1.0);
                ns = advance_density_with_source(&ns, &vs, &d, dt, h, Some(&s)).unwrap();
            }
            let err = x.iter().zip(&ns).map(|(x, v)| (v - exact(t_end, *x)).abs()).fold(0.0, f64::max);
            errors.push(err);
        }
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() < 0.2, "{errors:?}");
        }
    }

    #[test]
    fn constant_alpha_diffusion_examples() {
        let d = diffusion_constant_alpha(&[1.0], &[1.0], &[vec![0.0, 3.0]], 1.0).unwrap();
        assert!(d.iter().all(|v| (v - 1.0).abs() < 1e-15));
        let d = diffusion_constant_alpha(&[1.0, 2.0, 5.0], &[1.5; 3], &[vec![0.1], vec![0.0], vec![-1.0]], 3.0).unwrap();
        assert!((d[0] - 2.0).abs() < 1e-14);
        let d = diffusion_constant_alpha(&[1.0, 1.0], &[1.0, 2.0], &[vec![0.2], vec![0.2]], 1.0).unwrap();
        assert!((d[0] - 0.75).abs() < 1e-15);
        let d = diffusion_constant_alpha(&[1.0, 4.0], &[0.5, 3.0], &[vec![0.0, 2.0], vec![1.0, -2.0]], 2.0).unwrap();
        for v in d {
            assert!((2.0 / 3.0 - 1e-14..=2.0 / 0.5 + 1e-14).contains(&v));
        }
    }

    #[test]
    fn nonpositive_diffusion_names_the_assumption() {
        let err = steady_state(&[0.0; 4], &[1.0, 0.0, 1.0, 1.0], 1.0, 1.0, 0.1).unwrap_err();
        assert!(err.to_string().contains("Assumption 3.1"));
    }
}
