//! Small dense-free linear solvers for the implicit steps.

use crate::error::{Result, SviError};

/// Thomas algorithm for a general tridiagonal system. `sub[i]` couples row
/// `i + 1` to column `i`, `sup[i]` couples row `i` to column `i + 1`.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if rhs.len() != n || (n > 1 && (sub.len() != n - 1 || sup.len() != n - 1)) {
        return Err(SviError::LinearSolve("tridiagonal band lengths do not match".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv == 0.0 || !piv.is_finite() {
        return Err(SviError::LinearSolve("zero pivot at row 0".into()));
    }
    if n > 1 {
        c[0] = sup[0] / piv;
    }
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - sub[i - 1] * c[i - 1];
        if piv == 0.0 || !piv.is_finite() {
            return Err(SviError::LinearSolve(format!("zero pivot at row {i}")));
        }
        if i < n - 1 {
            c[i] = sup[i] / piv;
        }
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive
/// definite operator given as a closure.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    rhs: &[f64],
    x0: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = rhs.len();
    let mut x = x0.to_vec();
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let precond = |r: &[f64], z: &mut [f64]| {
        for i in 0..r.len() {
            z[i] = r[i] / diag[i];
        }
    };
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= rel_tol * bnorm {
            return Ok((x, it));
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 || !pap.is_finite() {
            return Err(SviError::LinearSolve(format!("operator not positive definite (pAp = {pap:.3e})")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        precond(&r, &mut z);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rnorm <= rel_tol * bnorm {
        Ok((x, max_iter))
    } else {
        Err(SviError::LinearSolve(format!(
            "CG stalled after {max_iter} iterations (relative residual {:.3e})",
            rnorm / bnorm
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn thomas_matches_hand_solution() {
        // [2 1 0; 1 3 1; 0 1 2] x = [3, 5, 3] => x = [1, 1, 1]
        let x = solve_tridiagonal(&[1.0, 1.0], &[2.0, 3.0, 2.0], &[1.0, 1.0], &[3.0, 5.0, 3.0]).unwrap();
        for v in x {
            assert_relative_eq!(v, 1.0, epsilon = 1e-14);
        }
        // non-symmetric rows
        let x = solve_tridiagonal(&[-2.0, 0.5], &[4.0, 5.0, 3.0], &[1.0, -1.0], &[6.0, 1.0, 4.0]).unwrap();
        let r0 = 4.0 * x[0] + x[1] - 6.0;
        let r1 = -2.0 * x[0] + 5.0 * x[1] - x[2] - 1.0;
        let r2 = 0.5 * x[1] + 3.0 * x[2] - 4.0;
        assert!(r0.abs() + r1.abs() + r2.abs() < 1e-13);
        assert!(solve_tridiagonal(&[1.0], &[0.0, 1.0], &[1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn cg_solves_spd_system() {
        let n = 50;
        let apply = |x: &[f64], out: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                out[i] = 3.0 * x[i] - l - r;
            }
        };
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let (x, _) = conjugate_gradient(apply, &vec![3.0; n], &rhs, &vec![0.0; n], 1e-13, 500).unwrap();
        let sub = vec![-1.0; n - 1];
        let direct = solve_tridiagonal(&sub, &vec![3.0; n], &sub, &rhs).unwrap();
        for (a, b) in x.iter().zip(&direct) {
            assert_relative_eq!(a, b, epsilon = 1e-11);
        }
    }
}
