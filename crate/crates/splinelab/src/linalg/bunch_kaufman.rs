//! Symmetric indefinite LDL^T factorization with Bunch-Kaufman partial
//! pivoting, lower-triangular storage. Handles the saddle-point systems from
//! the constrained normal equations, which have a zero block and are not
//! definite.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SplineError};

const ALPHA: f64 = 0.6403882032022076; // (1 + sqrt(17)) / 8

/// Factorization A = P L D L^T P^T with 1x1 and 2x2 pivot blocks.
#[derive(Debug, Clone)]
pub struct BunchKaufman {
    a: DMatrix<f64>,
    // LAPACK convention: ipiv[k] = p+1 for a 1x1 pivot swapped with row p,
    // ipiv[k] = ipiv[k+1] = -(p+1) for a 2x2 block whose second row was
    // swapped with row p.
    ipiv: Vec<i64>,
    n: usize,
}

impl BunchKaufman {
    pub fn factor(mut a: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "matrix must be square");
        let mut ipiv = vec![0i64; n];
        let mut k = 0usize;
        while k < n {
            let absakk = a[(k, k)].abs();
            let (imax, colmax) = {
                let mut imax = k;
                let mut colmax = 0.0;
                for i in (k + 1)..n {
                    let v = a[(i, k)].abs();
                    if v > colmax {
                        colmax = v;
                        imax = i;
                    }
                }
                (imax, colmax)
            };
            if absakk.max(colmax) == 0.0 {
                return Err(SplineError::SingularSystem(format!(
                    "zero pivot column at index {k}"
                )));
            }
            let mut kstep = 1usize;
            let kp = if absakk >= ALPHA * colmax {
                k
            } else {
                let mut rowmax = 0.0f64;
                for j in k..imax {
                    rowmax = rowmax.max(a[(imax, j)].abs());
                }
                for i in (imax + 1)..n {
                    rowmax = rowmax.max(a[(i, imax)].abs());
                }
                if absakk * rowmax >= ALPHA * colmax * colmax {
                    k
                } else if a[(imax, imax)].abs() >= ALPHA * rowmax {
                    imax
                } else {
                    kstep = 2;
                    imax
                }
            };
            let kk = k + kstep - 1;
            if kp != kk {
                // interchange only inside the trailing submatrix A(k.., k..);
                // the solve interleaves the same swaps block by block
                symmetric_swap_lower(&mut a, k, kk, kp);
            }
            if kstep == 1 {
                let d = a[(k, k)];
                if d == 0.0 {
                    return Err(SplineError::SingularSystem(format!(
                        "zero 1x1 pivot at index {k}"
                    )));
                }
                // trailing update column by column (column-major storage)
                for j in (k + 1)..n {
                    let cj = a[(j, k)] / d;
                    if cj != 0.0 {
                        for i in j..n {
                            let upd = a[(i, k)] * cj;
                            a[(i, j)] -= upd;
                        }
                    }
                }
                for i in (k + 1)..n {
                    a[(i, k)] /= d;
                }
                ipiv[k] = (kp + 1) as i64;
            } else {
                let d11 = a[(k, k)];
                let d21 = a[(k + 1, k)];
                let d22 = a[(k + 1, k + 1)];
                let det = d11 * d22 - d21 * d21;
                if det == 0.0 {
                    return Err(SplineError::SingularSystem(format!(
                        "singular 2x2 pivot at index {k}"
                    )));
                }
                for j in (k + 2)..n {
                    let b1 = a[(j, k)];
                    let b2 = a[(j, k + 1)];
                    let w1 = (d22 * b1 - d21 * b2) / det;
                    let w2 = (d11 * b2 - d21 * b1) / det;
                    if w1 != 0.0 || w2 != 0.0 {
                        for i in j..n {
                            let upd = a[(i, k)] * w1 + a[(i, k + 1)] * w2;
                            a[(i, j)] -= upd;
                        }
                    }
                }
                for i in (k + 2)..n {
                    let b1 = a[(i, k)];
                    let b2 = a[(i, k + 1)];
                    a[(i, k)] = (d22 * b1 - d21 * b2) / det;
                    a[(i, k + 1)] = (d11 * b2 - d21 * b1) / det;
                }
                ipiv[k] = -((kp + 1) as i64);
                ipiv[k + 1] = -((kp + 1) as i64);
            }
            k += kstep;
        }
        Ok(BunchKaufman { a, ipiv, n })
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, b: &mut DVector<f64>) {
        let n = self.n;
        let a = &self.a;
        // forward: apply P, L^-1 and D^-1 block by block
        let mut k = 0usize;
        while k < n {
            if self.ipiv[k] > 0 {
                let kp = (self.ipiv[k] - 1) as usize;
                if kp != k {
                    b.swap_rows(k, kp);
                }
                let bk = b[k];
                for i in (k + 1)..n {
                    b[i] -= a[(i, k)] * bk;
                }
                b[k] /= a[(k, k)];
                k += 1;
            } else {
                let kp = (-self.ipiv[k] - 1) as usize;
                if kp != k + 1 {
                    b.swap_rows(k + 1, kp);
                }
                let b1 = b[k];
                let b2 = b[k + 1];
                for i in (k + 2)..n {
                    b[i] -= a[(i, k)] * b1 + a[(i, k + 1)] * b2;
                }
                let d11 = a[(k, k)];
                let d21 = a[(k + 1, k)];
                let d22 = a[(k + 1, k + 1)];
                let det = d11 * d22 - d21 * d21;
                b[k] = (d22 * b1 - d21 * b2) / det;
                b[k + 1] = (d11 * b2 - d21 * b1) / det;
                k += 2;
            }
        }
        // backward: apply L^-T and P in reverse block order
        let mut k = n as i64 - 1;
        while k >= 0 {
            let ku = k as usize;
            if self.ipiv[ku] > 0 {
                let mut acc = b[ku];
                for i in (ku + 1)..n {
                    acc -= a[(i, ku)] * b[i];
                }
                b[ku] = acc;
                let kp = (self.ipiv[ku] - 1) as usize;
                if kp != ku {
                    b.swap_rows(ku, kp);
                }
                k -= 1;
            } else {
                let kb = ku - 1;
                let mut acc0 = b[kb];
                let mut acc1 = b[ku];
                for i in (ku + 1)..n {
                    acc0 -= a[(i, kb)] * b[i];
                    acc1 -= a[(i, ku)] * b[i];
                }
                b[kb] = acc0;
                b[ku] = acc1;
                let kp = (-self.ipiv[ku] - 1) as usize;
                if kp != ku {
                    b.swap_rows(ku, kp);
                }
                k -= 2;
            }
        }
    }
}

fn symmetric_swap_lower(a: &mut DMatrix<f64>, k: usize, r: usize, p: usize) {
    debug_assert!(k <= r && r < p);
    let n = a.nrows();
    for j in k..r {
        let t = a[(r, j)];
        a[(r, j)] = a[(p, j)];
        a[(p, j)] = t;
    }
    for j in (r + 1)..p {
        let t = a[(j, r)];
        a[(j, r)] = a[(p, j)];
        a[(p, j)] = t;
    }
    for i in (p + 1)..n {
        let t = a[(i, r)];
        a[(i, r)] = a[(i, p)];
        a[(i, p)] = t;
    }
    let t = a[(r, r)];
    a[(r, r)] = a[(p, p)];
    a[(p, p)] = t;
}

/// Two-norm condition estimate of a symmetric matrix from a few power
/// iterations on A and inverse iterations through the factorization.
pub fn condition_estimate(a: &DMatrix<f64>, factors: &BunchKaufman) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 1.0;
    }
    let start = DVector::from_fn(n, |i, _| {
        let base = if i % 2 == 0 { 1.0 } else { -0.5 };
        base + 0.01 * (i as f64 + 1.0)
    });
    let mut v = start.clone();
    v /= v.norm();
    let mut largest = 0.0;
    for _ in 0..16 {
        let w = a * &v;
        largest = w.norm();
        if largest == 0.0 {
            return f64::INFINITY;
        }
        v = w / largest;
    }
    let mut v = start;
    v /= v.norm();
    let mut inv_norm = 0.0;
    for _ in 0..16 {
        let w = factors.solve_vec(&v);
        inv_norm = w.norm();
        if !inv_norm.is_finite() || inv_norm == 0.0 {
            return f64::INFINITY;
        }
        v = w / inv_norm;
    }
    largest * inv_norm
}
