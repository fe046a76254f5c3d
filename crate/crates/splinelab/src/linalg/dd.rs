//! Double-double arithmetic and the dense routines built on it.
//!
//! A `Dd` value stores an unevaluated sum `hi + lo` of two doubles, giving
//! roughly 32 significant decimal digits. The brute-force solver and the
//! spectral bound run their factorizations in this type: their tolerances
//! (1e-8 relative on coefficients, 1e-8 above the unit bound) sit below what
//! plain f64 can certify once the regularization parameter pushes condition
//! numbers past ~1e12.

use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let err = b - (s - a);
    (s, err)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let err = a.mul_add(b, -p);
    (p, err)
}

impl Dd {
    #[inline]
    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn abs(self) -> Dd {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            -self
        } else {
            self
        }
    }

    pub fn sqrt(self) -> Dd {
        if self.hi == 0.0 && self.lo == 0.0 {
            return ZERO;
        }
        debug_assert!(self.hi > 0.0, "sqrt of negative double-double");
        // one Newton step on a double seed doubles the precision
        let approx = self.hi.sqrt();
        let x = Dd::from_f64(approx);
        let r = self / x;
        (x + r) * Dd::from_f64(0.5)
    }

    #[inline]
    pub fn is_positive(self) -> bool {
        self.hi > 0.0 || (self.hi == 0.0 && self.lo > 0.0)
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Dd {
        Dd::from_f64(x)
    }
}

impl Add for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, rhs: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, rhs.hi);
        let e = e + self.lo + rhs.lo;
        let (hi, lo) = quick_two_sum(s, e);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, rhs: Dd) -> Dd {
        self + (-rhs)
    }
}

impl Neg for Dd {
    type Output = Dd;
    #[inline]
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Mul for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, rhs: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, rhs.hi);
        let e = e + self.hi * rhs.lo + self.lo * rhs.hi;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    #[inline]
    fn div(self, rhs: Dd) -> Dd {
        let q1 = self.hi / rhs.hi;
        let r = self - rhs * Dd::from_f64(q1);
        let q2 = r.hi / rhs.hi;
        let r = r - rhs * Dd::from_f64(q2);
        let q3 = r.hi / rhs.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::from_f64(q3)
    }
}

impl PartialOrd for Dd {
    fn partial_cmp(&self, other: &Dd) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&other.lo),
            ord => ord,
        }
    }
}

/// Dense row-major double-double matrix. Only the operations the oracle
/// paths need: products of f64 matrices accumulated in double-double,
/// Cholesky, LU with partial pivoting, triangular solves and a Jacobi
/// eigensolver for symmetric matrices.
#[derive(Debug, Clone)]
pub struct DdMatrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<Dd>,
}

impl DdMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DdMatrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn from_f64(m: &nalgebra::DMatrix<f64>) -> Self {
        let mut out = DdMatrix::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out[(i, j)] = Dd::from_f64(m[(i, j)]);
            }
        }
        out
    }

    pub fn identity(n: usize) -> Self {
        let mut out = DdMatrix::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = ONE;
        }
        out
    }

    /// `A^T B` for f64 inputs, every entry accumulated in double-double.
    pub fn at_b(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> Self {
        assert_eq!(a.nrows(), b.nrows());
        let mut out = DdMatrix::zeros(a.ncols(), b.ncols());
        for i in 0..a.ncols() {
            for j in 0..b.ncols() {
                let mut acc = ZERO;
                for k in 0..a.nrows() {
                    let (p, e) = two_prod(a[(k, i)], b[(k, j)]);
                    acc = acc + Dd { hi: p, lo: e };
                }
                out[(i, j)] = acc;
            }
        }
        out
    }

    pub fn matmul(&self, other: &DdMatrix) -> DdMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = DdMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = ZERO;
                for k in 0..self.cols {
                    acc = acc + self[(i, k)] * other[(k, j)];
                }
                out[(i, j)] = acc;
            }
        }
        out
    }

    pub fn transpose(&self) -> DdMatrix {
        let mut out = DdMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn scale(&self, s: Dd) -> DdMatrix {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = *v * s;
        }
        out
    }

    pub fn add(&self, other: &DdMatrix) -> DdMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(&other.data) {
            *v = *v + *w;
        }
        out
    }

    /// Cholesky factor L (lower). Fails on a non-positive pivot.
    pub fn cholesky(&self) -> Option<DdMatrix> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut l = DdMatrix::zeros(n, n);
        for j in 0..n {
            let mut diag = self[(j, j)];
            for k in 0..j {
                diag = diag - l[(j, k)] * l[(j, k)];
            }
            if !diag.is_positive() {
                return None;
            }
            let root = diag.sqrt();
            l[(j, j)] = root;
            for i in (j + 1)..n {
                let mut acc = self[(i, j)];
                for k in 0..j {
                    acc = acc - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = acc / root;
            }
        }
        Some(l)
    }

    /// Solve L x = b with L lower triangular (forward substitution), column
    /// by column.
    pub fn solve_lower(&self, b: &DdMatrix) -> DdMatrix {
        let n = self.rows;
        let mut x = b.clone();
        for col in 0..b.cols {
            for i in 0..n {
                let mut acc = x[(i, col)];
                for k in 0..i {
                    acc = acc - self[(i, k)] * x[(k, col)];
                }
                x[(i, col)] = acc / self[(i, i)];
            }
        }
        x
    }

    /// Solve L^T x = b with L lower triangular (back substitution).
    pub fn solve_lower_transpose(&self, b: &DdMatrix) -> DdMatrix {
        let n = self.rows;
        let mut x = b.clone();
        for col in 0..b.cols {
            for i in (0..n).rev() {
                let mut acc = x[(i, col)];
                for k in (i + 1)..n {
                    acc = acc - self[(k, i)] * x[(k, col)];
                }
                x[(i, col)] = acc / self[(i, i)];
            }
        }
        x
    }

    /// LU factorization with partial pivoting, then solve. Returns None on a
    /// zero pivot column.
    pub fn lu_solve(&self, b: &DdMatrix) -> Option<DdMatrix> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let mut x = b.clone();
        for k in 0..n {
            let mut piv = k;
            let mut best = a[(k, k)].abs();
            for i in (k + 1)..n {
                let v = a[(i, k)].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best.hi == 0.0 && best.lo == 0.0 {
                return None;
            }
            if piv != k {
                for j in 0..n {
                    let tmp = a[(k, j)];
                    a[(k, j)] = a[(piv, j)];
                    a[(piv, j)] = tmp;
                }
                for c in 0..x.cols {
                    let tmp = x[(k, c)];
                    x[(k, c)] = x[(piv, c)];
                    x[(piv, c)] = tmp;
                }
            }
            let pivot = a[(k, k)];
            for i in (k + 1)..n {
                let factor = a[(i, k)] / pivot;
                a[(i, k)] = factor;
                for j in (k + 1)..n {
                    a[(i, j)] = a[(i, j)] - factor * a[(k, j)];
                }
                for c in 0..x.cols {
                    x[(i, c)] = x[(i, c)] - factor * x[(k, c)];
                }
            }
        }
        for c in 0..x.cols {
            for i in (0..n).rev() {
                let mut acc = x[(i, c)];
                for j in (i + 1)..n {
                    acc = acc - a[(i, j)] * x[(j, c)];
                }
                x[(i, c)] = acc / a[(i, i)];
            }
        }
        Some(x)
    }

    /// Eigenvalues of a symmetric matrix by the cyclic Jacobi method.
    pub fn jacobi_eigenvalues(&self) -> Vec<f64> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let half = Dd::from_f64(0.5);
        for _sweep in 0..60 {
            let mut off = 0.0f64;
            for i in 0..n {
                for j in (i + 1)..n {
                    off = off.max(a[(i, j)].to_f64().abs());
                }
            }
            if off < 1e-28 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq.to_f64().abs() < 1e-32 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) * half / apq;
                    let th = theta.to_f64();
                    // tan of the rotation angle, smaller root
                    let t = {
                        let sign = if th >= 0.0 { 1.0 } else { -1.0 };
                        let denom = Dd::from_f64(th.abs()) + (theta * theta + ONE).sqrt();
                        Dd::from_f64(sign) / denom
                    };
                    let c = ONE / (t * t + ONE).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = akp * c - akq * s;
                        a[(k, q)] = akp * s + akq * c;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = apk * c - aqk * s;
                        a[(q, k)] = apk * s + aqk * c;
                    }
                }
            }
        }
        let mut vals: Vec<f64> = (0..n).map(|i| a[(i, i)].to_f64()).collect();
        vals.sort_by(|x, y| y.partial_cmp(x).unwrap());
        vals
    }
}

impl std::ops::Index<(usize, usize)> for DdMatrix {
    type Output = Dd;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Dd {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DdMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Dd {
        &mut self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn arithmetic_identities() {
        let third = ONE / Dd::from_f64(3.0);
        let back = third * Dd::from_f64(3.0);
        assert!((back - ONE).to_f64().abs() < 1e-30);

        let a = Dd::from_f64(1e16);
        let b = Dd::from_f64(1.0);
        let c = (a + b) - a - b;
        assert_eq!(c.to_f64(), 0.0);

        let two = Dd::from_f64(2.0);
        let r = two.sqrt();
        assert!((r * r - two).to_f64().abs() < 1e-30);
    }

    #[test]
    fn cholesky_matches_f64_on_well_conditioned() {
        let n = 8;
        let a = DMatrix::from_fn(n, n, |i, j| {
            1.0 / (1.0 + (i as f64 - j as f64).abs()) + if i == j { 2.0 } else { 0.0 }
        });
        let rhs = DMatrix::from_fn(n, 1, |i, _| (i + 1) as f64);
        let dd_a = DdMatrix::from_f64(&a);
        let dd_b = DdMatrix::from_f64(&rhs);
        let l = dd_a.cholesky().unwrap();
        let y = l.solve_lower(&dd_b);
        let x = l.solve_lower_transpose(&y);
        let x_f64 = a.clone().cholesky().unwrap().solve(&rhs);
        for i in 0..n {
            assert!((x[(i, 0)].to_f64() - x_f64[(i, 0)]).abs() < 1e-10);
        }
    }

    #[test]
    fn lu_solve_matches_f64() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10;
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
        let x = DdMatrix::from_f64(&a)
            .lu_solve(&DdMatrix::from_f64(&b))
            .unwrap();
        let x_ref = a.lu().solve(&b).unwrap();
        for i in 0..n {
            assert!((x[(i, 0)].to_f64() - x_ref[(i, 0)]).abs() < 1e-9);
        }
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        // diag(5, 2, 1) conjugated by a rotation
        let q = DMatrix::from_row_slice(
            3,
            3,
            &[
                0.6, -0.8, 0.0, //
                0.8, 0.6, 0.0, //
                0.0, 0.0, 1.0,
            ],
        );
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![5.0, 2.0, 1.0]));
        let a = &q * d * q.transpose();
        let vals = DdMatrix::from_f64(&a).jacobi_eigenvalues();
        assert!((vals[0] - 5.0).abs() < 1e-12);
        assert!((vals[1] - 2.0).abs() < 1e-12);
        assert!((vals[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ill_conditioned_solve_stays_accurate() {
        // Hilbert matrix of size 10: cond ~ 1e13; double-double keeps
        // coefficient-level accuracy where f64 loses it
        let n = 10;
        let h = DMatrix::from_fn(n, n, |i, j| 1.0 / ((i + j + 1) as f64));
        let x_true = DMatrix::from_fn(n, 1, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
        // rhs computed in dd so the problem is posed exactly
        let dd_h = DdMatrix::from_f64(&h);
        let dd_x = DdMatrix::from_f64(&x_true);
        let b = dd_h.matmul(&dd_x);
        let x = dd_h.lu_solve(&b).unwrap();
        for i in 0..n {
            assert!(
                (x[(i, 0)].to_f64() - x_true[(i, 0)]).abs() < 1e-12,
                "entry {i}: {}",
                x[(i, 0)].to_f64()
            );
        }
    }
}
