//! Shift-invert Lanczos with locking.
//!
//! Each eigenpair is found by its own Lanczos run on `(H - σ)⁻¹`, restricted
//! to the orthogonal complement of the pairs already locked. The largest Ritz
//! value of the inverse is the lowest remaining eigenvalue, so degenerate
//! eigenvalues are returned with their full multiplicity.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm2};

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// Residual bound `‖Hx - Ex‖ / ‖x‖` for accepting a pair.
    pub tol: f64,
    /// Krylov basis size before an explicit restart.
    pub max_basis: usize,
    pub max_restarts: usize,
    pub seed: u64,
    /// Shift `σ`; must lie below the spectrum.
    pub shift: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_basis: 60,
            max_restarts: 20,
            seed: 0x5eed,
            shift: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    /// Unit Euclidean norm.
    pub vector: Vec<f64>,
    pub residual: f64,
}

fn project_out(locked: &[Vec<f64>], x: &mut [f64]) {
    for q in locked {
        let c = dot(q, x);
        axpy(-c, q, x);
    }
}

/// Lowest `count` eigenpairs of the symmetric operator `apply`.
///
/// `solve_shifted(b, x)` must overwrite `x` with `(H - σ)⁻¹ b`.
pub fn lowest_eigenpairs<A, S>(
    dim: usize,
    count: usize,
    apply: A,
    solve_shifted: S,
    opts: EigenOptions,
) -> Result<Vec<EigenPair>>
where
    A: Fn(&[f64], &mut [f64]),
    S: Fn(&[f64], &mut [f64]) -> Result<()>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut locked: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut pairs = Vec::with_capacity(count);
    let mut hx = vec![0.0; dim];
    let mut total_steps = 0;

    for index in 0..count {
        let mut start: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut found = None;
        let mut last_residual = f64::INFINITY;
        'restarts: for _ in 0..=opts.max_restarts {
            project_out(&locked, &mut start);
            project_out(&locked, &mut start);
            let s = norm2(&start);
            if s == 0.0 {
                return Err(Error::InvalidArgument(
                    "Lanczos start vector lies in the locked subspace".into(),
                ));
            }
            start.iter_mut().for_each(|v| *v /= s);

            let mut basis: Vec<Vec<f64>> = vec![start.clone()];
            let mut alpha: Vec<f64> = Vec::new();
            let mut beta: Vec<f64> = Vec::new();
            let mut w = vec![0.0; dim];
            for j in 0..opts.max_basis {
                total_steps += 1;
                let mut rhs = basis[j].clone();
                project_out(&locked, &mut rhs);
                solve_shifted(&rhs, &mut w)?;
                project_out(&locked, &mut w);
                let a = dot(&w, &basis[j]);
                alpha.push(a);
                // Full reorthogonalization, applied twice.
                for _ in 0..2 {
                    for v in &basis {
                        let c = dot(v, &w);
                        axpy(-c, v, &mut w);
                    }
                    project_out(&locked, &mut w);
                }
                let b = norm2(&w);

                let k = alpha.len();
                let mut t = DMatrix::zeros(k, k);
                for i in 0..k {
                    t[(i, i)] = alpha[i];
                    if i + 1 < k {
                        t[(i, i + 1)] = beta[i];
                        t[(i + 1, i)] = beta[i];
                    }
                }
                let eig = SymmetricEigen::new(t);
                let (top, _) = eig
                    .eigenvalues
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
                let coeffs = eig.eigenvectors.column(top);
                let mut y = vec![0.0; dim];
                for (c, v) in coeffs.iter().zip(&basis) {
                    axpy(*c, v, &mut y);
                }
                project_out(&locked, &mut y);
                let ny = norm2(&y);
                y.iter_mut().for_each(|v| *v /= ny);
                apply(&y, &mut hx);
                let value = dot(&y, &hx);
                axpy(-value, &y, &mut hx);
                let residual = norm2(&hx);
                last_residual = residual;
                if residual <= opts.tol {
                    found = Some(EigenPair {
                        value,
                        vector: y,
                        residual,
                    });
                    break 'restarts;
                }
                if b <= 1e-14 || j + 1 == opts.max_basis {
                    start = y;
                    continue 'restarts;
                }
                beta.push(b);
                basis.push(w.iter().map(|v| v / b).collect());
            }
        }
        match found {
            Some(pair) => {
                locked.push(pair.vector.clone());
                pairs.push(pair);
            }
            None => {
                return Err(Error::EigenNotConverged {
                    index,
                    residual: last_residual,
                    iterations: total_steps,
                })
            }
        }
    }
    pairs.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_degenerate_eigenvalues_of_diagonal_operator() {
        let diag = [5.0, 1.0, 3.0, 3.0, 8.0, 2.0, 9.0, 10.0, 3.0, 7.0];
        let n = diag.len();
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                y[i] = diag[i] * x[i];
            }
        };
        let solve = |b: &[f64], x: &mut [f64]| {
            for i in 0..n {
                x[i] = b[i] / diag[i];
            }
            Ok(())
        };
        let pairs = lowest_eigenpairs(n, 5, apply, solve, EigenOptions::default()).unwrap();
        let values: Vec<f64> = pairs.iter().map(|p| p.value).collect();
        let expected = [1.0, 2.0, 3.0, 3.0, 3.0];
        for (v, e) in values.iter().zip(expected) {
            assert!((v - e).abs() < 1e-9, "{values:?}");
        }
    }
}
