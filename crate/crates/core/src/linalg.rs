//! Small dense and iterative linear-algebra kernels shared by the solvers.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    /// Stop when `‖r‖ <= rel_tol * ‖b‖` ...
    pub rel_tol: f64,
    /// ... or when `‖r‖ <= abs_tol`.
    pub abs_tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 0.0,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgReport {
    pub iterations: usize,
    pub residual: f64,
}

/// Preconditioned conjugate gradients for a symmetric positive definite
/// operator. `x` holds the initial guess on entry.
pub fn conjugate_gradient<A, P>(
    apply: A,
    precondition: P,
    b: &[f64],
    x: &mut [f64],
    opts: CgOptions,
) -> Result<CgReport>
where
    A: Fn(&[f64], &mut [f64]),
    P: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm2(b);
    let target = (opts.rel_tol * bnorm).max(opts.abs_tol);
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut rnorm = norm2(&r);
    if rnorm <= target || bnorm == 0.0 && rnorm == 0.0 {
        return Ok(CgReport {
            iterations: 0,
            residual: rnorm,
        });
    }
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=opts.max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::CgNotConverged {
                iterations: it,
                residual: rnorm / bnorm.max(f64::MIN_POSITIVE),
            });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        rnorm = norm2(&r);
        if rnorm <= target {
            return Ok(CgReport {
                iterations: it,
                residual: rnorm,
            });
        }
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(Error::CgNotConverged {
        iterations: opts.max_iter,
        residual: rnorm / bnorm.max(f64::MIN_POSITIVE),
    })
}

/// Identity preconditioner.
pub fn no_preconditioner(r: &[f64], z: &mut [f64]) {
    z.copy_from_slice(r);
}

/// Thomas algorithm for `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]`.
/// `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot == 0.0 || !pivot.is_finite() {
        return Err(Error::SingularSystem { row: 0, pivot });
    }
    c[0] = if n > 1 { upper[0] / pivot } else { 0.0 };
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - lower[i] * c[i - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::SingularSystem { row: i, pivot });
        }
        c[i] = if i + 1 < n { upper[i] / pivot } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / pivot;
    }
    let mut x = d;
    for i in (0..n.saturating_sub(1)).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// Multiplies a column-major 3-tensor with dimensions `dims` by `q[a]ᵀ`
/// (`forward`) or by `q[a]` along every axis `a`. With orthogonal `q[a]`
/// the two directions are mutually inverse.
pub fn tensor_mode_transform(x: &[f64], dims: [usize; 3], q: [&DMatrix<f64>; 3], forward: bool) -> Vec<f64> {
    let [d0, d1, d2] = dims;
    debug_assert_eq!(x.len(), d0 * d1 * d2);
    let xm = DMatrix::from_column_slice(d0, d1 * d2, x);
    let ym = if forward { q[0].tr_mul(&xm) } else { q[0] * xm };
    let mut data = ym.as_slice().to_vec();
    for k in 0..d2 {
        let slab = &mut data[k * d0 * d1..(k + 1) * d0 * d1];
        let xm = DMatrix::from_column_slice(d0, d1, slab);
        let ym = if forward { xm * q[1] } else { xm * q[1].transpose() };
        slab.copy_from_slice(ym.as_slice());
    }
    let xm = DMatrix::from_column_slice(d0 * d1, d2, &data);
    let ym = if forward { xm * q[2] } else { xm * q[2].transpose() };
    ym.as_slice().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_matches_dense_solve() {
        let lower = [0.0, -1.0, -0.5, -2.0];
        let diag = [4.0, 5.0, 3.0, 6.0];
        let upper = [-1.0, -2.0, -0.25, 0.0];
        let rhs = [1.0, 2.0, 3.0, 4.0];
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        let m = nalgebra::DMatrix::from_row_slice(
            4,
            4,
            &[4.0, -1.0, 0.0, 0.0, -1.0, 5.0, -2.0, 0.0, 0.0, -0.5, 3.0, -0.25, 0.0, 0.0, -2.0, 6.0],
        );
        let dense = m.lu().solve(&nalgebra::DVector::from_column_slice(&rhs)).unwrap();
        for i in 0..4 {
            assert!((x[i] - dense[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_tridiagonal_is_reported() {
        let r = solve_tridiagonal(&[0.0, 1.0], &[1.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]);
        assert!(matches!(r, Err(Error::SingularSystem { row: 1, .. })));
    }

    #[test]
    fn cg_solves_spd_system() {
        let n = 50;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 2.0 * x[i] - l - r;
            }
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let rep = conjugate_gradient(apply, no_preconditioner, &b, &mut x, CgOptions::default()).unwrap();
        assert!(rep.iterations <= n);
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax);
        let err: f64 = ax.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }
}
