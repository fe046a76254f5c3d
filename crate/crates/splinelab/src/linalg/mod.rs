//! Dense linear algebra support: a Bunch-Kaufman solver for the symmetric
//! indefinite bordered systems, double-double routines for the oracle paths,
//! and small eigen helpers shared by the spectral module and its tests.

pub mod bunch_kaufman;
pub mod dd;

pub use bunch_kaufman::{condition_estimate, BunchKaufman};

use nalgebra::DMatrix;

/// Eigenvalues of a symmetric matrix, descending.
pub fn sym_eigenvalues_desc(mat: DMatrix<f64>) -> Vec<f64> {
    let sym = (&mat + mat.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    vals
}

/// Plain f64 cyclic Jacobi eigenvalues, descending. Kept as an algorithm
/// independent of the QR-based path for cross-checks.
pub fn jacobi_eigenvalues(mat: &DMatrix<f64>) -> Vec<f64> {
    let n = mat.nrows();
    assert_eq!(n, mat.ncols());
    let mut a = mat.clone();
    for _sweep in 0..50 {
        let mut off: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(a[(i, j)].abs());
            }
        }
        if off < 1e-14 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut vals: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    vals.sort_by(|x, y| y.partial_cmp(x).unwrap());
    vals
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn jacobi_agrees_with_qr_path() {
        let q = DMatrix::from_row_slice(
            3,
            3,
            &[0.36, -0.8, 0.48, 0.8, 0.6, 0.0, -0.48, 0.384, 0.8768],
        );
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -1.0, 0.25]));
        let a = &q * d * q.transpose();
        let ja = jacobi_eigenvalues(&a);
        let qr = sym_eigenvalues_desc(a);
        for (x, y) in ja.iter().zip(&qr) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }
}
