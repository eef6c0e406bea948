//! Cyclic Jacobi eigenvalues for dense symmetric matrices.

use crate::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigenvalues (ascending) of the symmetric `n × n` row-major matrix `a`.
///
/// Rotations continue until the off-diagonal Frobenius norm falls below
/// `rel_tol · ‖A‖_F`. Only the upper triangle's symmetry is relied on; the
/// input is overwritten.
pub fn jacobi_eigenvalues(a: &mut [f64], n: usize, rel_tol: f64) -> Result<Vec<f64>> {
    assert_eq!(a.len(), n * n, "jacobi: matrix is not n × n");
    let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let target = rel_tol * norm;

    for sweep in 0..MAX_SWEEPS {
        let mut off_sq = 0.0;
        let mut off_abs = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                let v = a[p * n + q];
                off_sq += 2.0 * v * v;
                off_abs += v.abs();
            }
        }
        if off_sq.sqrt() <= target {
            let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
            eig.sort_by(f64::total_cmp);
            return Ok(eig);
        }
        // Early sweeps only rotate the larger elements.
        let threshold = if sweep < 3 { 0.2 * off_abs / (n * n) as f64 } else { 0.0 };

        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                if sweep > 3 && app.abs() + 100.0 * apq.abs() == app.abs()
                    && aqq.abs() + 100.0 * apq.abs() == aqq.abs()
                {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                if apq.abs() <= threshold {
                    continue;
                }
                rotate(a, n, p, q);
            }
        }
    }
    Err(Error::NotConverged(MAX_SWEEPS))
}

/// Annihilates `a[p][q]` with one Jacobi rotation.
fn rotate(a: &mut [f64], n: usize, p: usize, q: usize) {
    let apq = a[p * n + q];
    let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let tau = s / (1.0 + c);

    a[p * n + p] -= t * apq;
    a[q * n + q] += t * apq;
    a[p * n + q] = 0.0;
    a[q * n + p] = 0.0;

    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        // Rows p and q hold the same values as columns p and q.
        let g = a[p * n + k];
        let h = a[q * n + k];
        let new_p = g - s * (h + g * tau);
        let new_q = h + s * (g - h * tau);
        a[p * n + k] = new_p;
        a[q * n + k] = new_q;
        a[k * n + p] = new_p;
        a[k * n + q] = new_q;
    }
}
