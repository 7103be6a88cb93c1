//! Lawson-Hanson active-set solver for `min ||A x - b||_2` subject to `x >= 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{QnsError, Result};

#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    /// `||A x - b||_2` at the solution.
    pub residual: f64,
    /// Outer (column-admission) iterations used.
    pub iterations: usize,
}

/// Solve the NNLS problem. The dual vector `w = A^T (b - A x)` satisfies
/// `w_j <= tol` on the zero set at exit, and the passive set is solved in
/// the least-squares sense, so `w_j ~ 0` there.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64, max_iter: usize) -> Result<NnlsSolution> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 || b.len() != m {
        return Err(QnsError::InvalidArgument(format!(
            "NNLS needs a non-empty {m}x{n} matrix and a length-{m} right-hand side"
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(QnsError::InvalidArgument("NNLS inputs must be finite".into()));
    }
    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let mut iterations = 0;

    loop {
        let w = a.tr_mul(&(b - a * &x));
        // Column with the largest positive dual value, skipping ones whose
        // admission was just rejected as numerically dependent.
        let mut rejected = vec![false; n];
        let candidate = loop {
            let pick = (0..n)
                .filter(|&j| !passive[j] && !rejected[j] && w[j] > tol)
                .max_by(|&i, &j| w[i].total_cmp(&w[j]));
            let Some(j) = pick else { break None };
            passive[j] = true;
            match solve_passive(a, b, &passive) {
                Some(z) if z[j] > 0.0 => break Some(z),
                _ => {
                    passive[j] = false;
                    rejected[j] = true;
                }
            }
        };
        let Some(mut z) = candidate else { break };

        iterations += 1;
        if iterations > max_iter {
            return Err(QnsError::NoConvergence(format!("NNLS exceeded {max_iter} iterations")));
        }

        // Inner loop: step back toward feasibility until z is positive on P.
        loop {
            if (0..n).all(|j| !passive[j] || z[j] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            let mut blocking = 0;
            for j in 0..n {
                if passive[j] && z[j] <= 0.0 {
                    let t = x[j] / (x[j] - z[j]);
                    if t < alpha {
                        alpha = t;
                        blocking = j;
                    }
                }
            }
            for j in 0..n {
                if passive[j] {
                    x[j] += alpha * (z[j] - x[j]);
                }
            }
            x[blocking] = 0.0;
            for j in 0..n {
                if passive[j] && x[j] <= 0.0 {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            match solve_passive(a, b, &passive) {
                Some(next) => z = next,
                None => {
                    return Err(QnsError::SingularSystem("NNLS passive-set system is singular".into()))
                }
            }
        }
    }

    let residual = (b - a * &x).norm();
    Ok(NnlsSolution { x, residual, iterations })
}

/// Least-squares solution restricted to passive columns (zero elsewhere).
fn solve_passive(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> Option<DVector<f64>> {
    let cols: Vec<usize> = (0..passive.len()).filter(|&j| passive[j]).collect();
    let n = a.ncols();
    let mut z = DVector::<f64>::zeros(n);
    if cols.is_empty() {
        return Some(z);
    }
    let sub = a.select_columns(&cols);
    let qr = sub.qr();
    let r = qr.r();
    let diag_max = r.diagonal().amax();
    if r.diagonal().iter().any(|d| d.abs() <= 1e-13 * diag_max) {
        return None;
    }
    let qtb = qr.q().tr_mul(b);
    let sol = r.solve_upper_triangular(&qtb)?;
    for (i, &j) in cols.iter().enumerate() {
        z[j] = sol[i];
    }
    Some(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_passes_through() {
        let a = DMatrix::<f64>::identity(3, 3);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let s = nnls(&a, &b, 1e-10, 9).unwrap();
        assert!((s.x - &b).norm() < 1e-14);
        assert!(s.residual < 1e-14);
    }

    #[test]
    fn negative_target_is_clamped() {
        let a = DMatrix::<f64>::identity(3, 3);
        let b = DVector::from_vec(vec![1.0, -1.0, 3.0]);
        let s = nnls(&a, &b, 1e-10, 9).unwrap();
        assert_eq!(s.x[1], 0.0);
        assert!((s.x[0] - 1.0).abs() < 1e-14 && (s.x[2] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn textbook_example() {
        // min ||A x - b|| with x >= 0; unconstrained solution has x2 < 0.
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, 4.0, -1.0]);
        let s = nnls(&a, &b, 1e-12, 6).unwrap();
        assert!((s.x[0] - 3.0).abs() < 1e-14);
        assert_eq!(s.x[1], 0.0);
    }
}
