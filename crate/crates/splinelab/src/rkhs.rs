//! Reproducing-kernel machinery for the order-m Sobolev space on [0, 1].
//!
//! The space splits as a direct sum of the span of the monomial basis
//! `zeta_i(t) = t^i / i!` for `i < m` (unpenalized part of dimension m) and
//! the functions with vanishing derivatives at 0 up to order m-1 (penalized
//! part, normed by the L2 norm of the m-th derivative). Point evaluation is
//! continuous and is represented by the kernel section
//! `K(s, t) = K0(s, t) + K1(s, t)` where `K0` is the polynomial part and
//! `K1(s, t) = int_0^min(s,t) (s-u)^{m-1} (t-u)^{m-1} du / ((m-1)!)^2`.
//!
//! Inner products follow the Hilbert convention: the squared norm is the sum
//! of the squared norms of the two parts, so `(a, b) = (a, b)_0 + (a, b)_1`
//! is a genuine inner product and the reproducing identity
//! `(eta_t, mu) = mu(t)` holds exactly.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SplineError};

/// Which kernel block a Gram matrix is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelPart {
    /// K = K0 + K1
    K,
    /// Polynomial block only.
    K0,
    /// Penalized block only.
    K1,
}

/// The order-m space on the fixed domain [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSpace {
    m: usize,
}

impl KernelSpace {
    pub fn new(m: usize) -> Result<Self> {
        if m < 1 {
            return Err(SplineError::InvalidParameter(
                "derivative order m must be at least 1".into(),
            ));
        }
        if m > 30 {
            return Err(SplineError::InvalidParameter(format!(
                "derivative order m = {m} is outside the supported range (<= 30)"
            )));
        }
        Ok(KernelSpace { m })
    }

    /// Penalized derivative order; also the dimension of the polynomial part.
    pub fn order(&self) -> usize {
        self.m
    }

    /// Monomial basis function `zeta_i(t) = t^i / i!`.
    pub fn zeta(&self, i: usize, t: f64) -> f64 {
        assert!(
            i < self.m,
            "basis index {i} out of range for m = {}",
            self.m
        );
        assert_unit(t);
        t.powi(i as i32) / factorial(i)
    }

    /// Green's function `(t - u)_+^{m-1} / (m-1)!` of the m-th derivative
    /// with vanishing boundary conditions at 0.
    pub fn greens(&self, t: f64, u: f64) -> f64 {
        assert_unit(t);
        assert_unit(u);
        if t <= u {
            return 0.0;
        }
        (t - u).powi(self.m as i32 - 1) / factorial(self.m - 1)
    }

    /// Polynomial kernel block `sum_{i<m} zeta_i(s) zeta_i(t)`.
    pub fn k0(&self, s: f64, t: f64) -> f64 {
        assert_unit(s);
        assert_unit(t);
        let mut acc = 0.0;
        let mut ps = 1.0;
        let mut pt = 1.0;
        for i in 0..self.m {
            let fi = factorial(i);
            acc += (ps / fi) * (pt / fi);
            ps *= s;
            pt *= t;
        }
        acc
    }

    /// Penalized kernel block, the integral of the product of the two Green's
    /// sections. Evaluated in closed form by binomial expansion:
    /// with a = min(s,t), d = |s - t|,
    /// `K1 = sum_k C(m-1, k) d^{m-1-k} a^{m+k} / (m+k)` over `((m-1)!)^2`.
    pub fn k1(&self, s: f64, t: f64) -> f64 {
        assert_unit(s);
        assert_unit(t);
        let (a, b) = if s <= t { (s, t) } else { (t, s) };
        if a == 0.0 {
            return 0.0;
        }
        let d = b - a;
        let m = self.m;
        let mut acc = 0.0;
        let mut binom = 1.0;
        for k in 0..m {
            // d.powi(0) == 1 even at d == 0, so the k = m-1 term survives
            // coincident arguments exactly
            acc += binom * d.powi((m - 1 - k) as i32) * a.powi((m + k) as i32) / (m + k) as f64;
            binom *= (m - 1 - k) as f64 / (k + 1) as f64;
        }
        let f = factorial(m - 1);
        acc / (f * f)
    }

    /// Full reproducing kernel `K = K0 + K1 = (eta_s, eta_t) = eta_s(t)`.
    pub fn kernel(&self, s: f64, t: f64) -> f64 {
        self.k0(s, t) + self.k1(s, t)
    }

    fn part(&self, which: KernelPart, s: f64, t: f64) -> f64 {
        match which {
            KernelPart::K => self.kernel(s, t),
            KernelPart::K0 => self.k0(s, t),
            KernelPart::K1 => self.k1(s, t),
        }
    }

    /// Gram matrix of the chosen kernel block over `points`.
    pub fn gram(&self, points: &[f64], which: KernelPart) -> Result<DMatrix<f64>> {
        if points.is_empty() {
            return Err(SplineError::EmptyPoints);
        }
        let n = points.len();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.part(which, points[i], points[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }

    /// The representer of point evaluation at `t`: polynomial coefficients
    /// `zeta_i(t)` plus a single penalized knot of weight one at `t`.
    pub fn representer(&self, t: f64) -> SpanElement {
        assert_unit(t);
        let poly = (0..self.m).map(|i| self.zeta(i, t)).collect();
        SpanElement {
            space: *self,
            poly,
            knots: vec![(t, 1.0)],
        }
    }
}

/// H0 / penalized / full norms of a span element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpanNorms {
    pub h0: f64,
    pub h1: f64,
    pub full: f64,
}

/// A function in the span of the polynomial basis and finitely many
/// penalized kernel sections, stored as `m` polynomial coefficients plus
/// weighted knots. The same representation carries synthetic truths, fitted
/// splines and evaluation representers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanElement {
    space: KernelSpace,
    poly: Vec<f64>,
    knots: Vec<(f64, f64)>,
}

impl SpanElement {
    pub fn new(space: KernelSpace, poly: Vec<f64>, knots: Vec<(f64, f64)>) -> Result<Self> {
        if poly.len() != space.order() {
            return Err(SplineError::InvalidParameter(format!(
                "expected {} polynomial coefficients, got {}",
                space.order(),
                poly.len()
            )));
        }
        for &(s, _) in &knots {
            if !(0.0..=1.0).contains(&s) || !s.is_finite() {
                return Err(SplineError::InvalidParameter(format!(
                    "knot location {s} outside [0, 1]"
                )));
            }
        }
        Ok(SpanElement { space, poly, knots })
    }

    pub fn zero(space: KernelSpace) -> Self {
        SpanElement {
            space,
            poly: vec![0.0; space.order()],
            knots: Vec::new(),
        }
    }

    pub fn polynomial(space: KernelSpace, poly: Vec<f64>) -> Result<Self> {
        Self::new(space, poly, Vec::new())
    }

    pub fn space(&self) -> KernelSpace {
        self.space
    }

    pub fn poly(&self) -> &[f64] {
        &self.poly
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        assert_unit(t);
        let mut acc = 0.0;
        let mut tp = 1.0;
        for (i, &d) in self.poly.iter().enumerate() {
            acc += d * tp / factorial(i);
            tp *= t;
        }
        for &(s, w) in &self.knots {
            acc += w * self.space.k1(s, t);
        }
        acc
    }

    /// `(a, b) = (a, b)_0 + (a, b)_1` with the polynomial coefficients
    /// orthonormal and `(chi1 eta_s, chi1 eta_t)_1 = K1(s, t)`.
    pub fn inner(&self, other: &SpanElement) -> Result<f64> {
        if self.space != other.space {
            return Err(SplineError::SpaceMismatch {
                left: self.space.order(),
                right: other.space.order(),
            });
        }
        let mut acc = 0.0;
        for (a, b) in self.poly.iter().zip(&other.poly) {
            acc += a * b;
        }
        for &(s, ws) in &self.knots {
            for &(t, wt) in &other.knots {
                acc += ws * wt * self.space.k1(s, t);
            }
        }
        Ok(acc)
    }

    pub fn norms(&self) -> SpanNorms {
        let h0_sq: f64 = self.poly.iter().map(|d| d * d).sum();
        let mut h1_sq = 0.0;
        for &(s, ws) in &self.knots {
            for &(t, wt) in &self.knots {
                h1_sq += ws * wt * self.space.k1(s, t);
            }
        }
        let h1_sq = h1_sq.max(0.0);
        SpanNorms {
            h0: h0_sq.sqrt(),
            h1: h1_sq.sqrt(),
            full: (h0_sq + h1_sq).sqrt(),
        }
    }

    pub fn scaled(&self, factor: f64) -> SpanElement {
        SpanElement {
            space: self.space,
            poly: self.poly.iter().map(|d| d * factor).collect(),
            knots: self.knots.iter().map(|&(s, w)| (s, w * factor)).collect(),
        }
    }

    /// `self - other`, knots concatenated.
    pub fn difference(&self, other: &SpanElement) -> Result<SpanElement> {
        if self.space != other.space {
            return Err(SplineError::SpaceMismatch {
                left: self.space.order(),
                right: other.space.order(),
            });
        }
        let poly = self
            .poly
            .iter()
            .zip(&other.poly)
            .map(|(a, b)| a - b)
            .collect();
        let mut knots = self.knots.clone();
        knots.extend(other.knots.iter().map(|&(s, w)| (s, -w)));
        Ok(SpanElement {
            space: self.space,
            poly,
            knots,
        })
    }

    /// Knot locations, used to split quadrature intervals at the points
    /// where the element stops being a single polynomial.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.knots.iter().map(|&(s, _)| s).collect()
    }
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

fn assert_unit(t: f64) {
    assert!(
        (0.0..=1.0).contains(&t) && t.is_finite(),
        "argument {t} outside the domain [0, 1]"
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Adaptive Simpson oracle with a relative target, independent of the
    /// closed-form K1 path.
    fn adaptive_simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
        fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        }
        fn recurse<F: Fn(f64) -> f64>(
            f: &F,
            a: f64,
            b: f64,
            whole: f64,
            tol: f64,
            depth: usize,
        ) -> f64 {
            let mid = 0.5 * (a + b);
            let left = simpson(f, a, mid);
            let right = simpson(f, mid, b);
            if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                recurse(f, a, mid, left, tol / 2.0, depth - 1)
                    + recurse(f, mid, b, right, tol / 2.0, depth - 1)
            }
        }
        let whole = simpson(&f, a, b);
        let tol = whole.abs().max(1e-300) * rel_tol;
        recurse(&f, a, b, whole, tol, 48)
    }

    fn k1_oracle(space: &KernelSpace, s: f64, t: f64) -> f64 {
        let hi = s.min(t);
        if hi == 0.0 {
            return 0.0;
        }
        adaptive_simpson(|u| space.greens(s, u) * space.greens(t, u), 0.0, hi, 1e-12)
    }

    fn random_element(rng: &mut ChaCha8Rng, space: KernelSpace, max_knots: usize) -> SpanElement {
        let poly = (0..space.order())
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let k = rng.random_range(0..=max_knots);
        let knots = (0..k)
            .map(|_| (rng.random::<f64>(), rng.random_range(-2.0..2.0)))
            .collect();
        SpanElement::new(space, poly, knots).unwrap()
    }

    #[test]
    fn zeta_values() {
        let s2 = KernelSpace::new(2).unwrap();
        assert_eq!(s2.zeta(0, 0.7), 1.0);
        let s3 = KernelSpace::new(3).unwrap();
        assert!((s3.zeta(2, 0.5) - 0.125).abs() < 1e-15);
        let s4 = KernelSpace::new(4).unwrap();
        assert!((s4.zeta(3, 1.0) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn zeta_index_out_of_range() {
        KernelSpace::new(2).unwrap().zeta(2, 0.5);
    }

    #[test]
    #[should_panic(expected = "outside the domain")]
    fn zeta_domain_checked() {
        KernelSpace::new(2).unwrap().zeta(0, 1.5);
    }

    #[test]
    fn greens_values() {
        let s2 = KernelSpace::new(2).unwrap();
        assert!((s2.greens(0.7, 0.2) - 0.5).abs() < 1e-15);
        assert_eq!(s2.greens(0.2, 0.7), 0.0);
        let s1 = KernelSpace::new(1).unwrap();
        assert_eq!(s1.greens(0.6, 0.4), 1.0);
        assert_eq!(s1.greens(0.4, 0.4), 0.0);
    }

    #[test]
    fn k0_values() {
        let s1 = KernelSpace::new(1).unwrap();
        assert_eq!(s1.k0(0.3, 0.9), 1.0);
        let s2 = KernelSpace::new(2).unwrap();
        assert!((s2.k0(0.5, 0.5) - 1.25).abs() < 1e-15);
        let s3 = KernelSpace::new(3).unwrap();
        assert!((s3.k0(0.2, 0.4) - 1.0816).abs() < 1e-12);
    }

    #[test]
    fn k1_matches_spot_values() {
        let s1 = KernelSpace::new(1).unwrap();
        assert!((s1.k1(0.3, 0.7) - 0.3).abs() < 1e-15);
        let s2 = KernelSpace::new(2).unwrap();
        assert!((s2.k1(0.5, 0.5) - 1.0 / 24.0).abs() < 1e-15);
        assert_eq!(s2.k1(0.0, 0.8), 0.0);
    }

    #[test]
    fn k1_matches_quadrature_oracle() {
        for m in 1..=4 {
            let space = KernelSpace::new(m).unwrap();
            for i in 0..12 {
                for j in 0..12 {
                    let s = i as f64 / 11.0;
                    let t = j as f64 / 11.0;
                    let closed = space.k1(s, t);
                    let numeric = k1_oracle(&space, s, t);
                    let scale = closed.abs().max(1e-12);
                    assert!(
                        (closed - numeric).abs() / scale < 1e-9,
                        "m={m} s={s} t={t}: {closed} vs {numeric}"
                    );
                }
            }
        }
    }

    #[test]
    fn kernel_values() {
        let s1 = KernelSpace::new(1).unwrap();
        assert!((s1.kernel(0.5, 0.3) - 1.3).abs() < 1e-15);
        assert!((s1.kernel(1.0, 1.0) - 2.0).abs() < 1e-15);
        let s2 = KernelSpace::new(2).unwrap();
        assert!((s2.kernel(0.5, 0.5) - (1.25 + 1.0 / 24.0)).abs() < 1e-15);
    }

    #[test]
    fn gram_spot_values() {
        let s1 = KernelSpace::new(1).unwrap();
        let g = s1.gram(&[0.5], KernelPart::K).unwrap();
        assert!((g[(0, 0)] - 1.5).abs() < 1e-15);

        let s2 = KernelSpace::new(2).unwrap();
        let g = s2.gram(&[0.2, 0.8], KernelPart::K1).unwrap();
        let off = adaptive_oracle_02_08();
        assert!((g[(0, 1)] - off).abs() < 1e-9);
        assert_eq!(g[(0, 1)], g[(1, 0)]);
    }

    fn adaptive_oracle_02_08() -> f64 {
        // int_0^0.2 (0.2-u)(0.8-u) du, evaluated directly
        let f = |u: f64| (0.2 - u) * (0.8 - u);
        adaptive_simpson(f, 0.0, 0.2, 1e-13)
    }

    #[test]
    fn gram_rejects_empty() {
        let s = KernelSpace::new(2).unwrap();
        assert!(matches!(
            s.gram(&[], KernelPart::K),
            Err(SplineError::EmptyPoints)
        ));
    }

    #[test]
    fn inner_product_examples() {
        let s2 = KernelSpace::new(2).unwrap();
        let z0 = SpanElement::polynomial(s2, vec![1.0, 0.0]).unwrap();
        let z1 = SpanElement::polynomial(s2, vec![0.0, 1.0]).unwrap();
        assert_eq!(z0.inner(&z1).unwrap(), 0.0);

        let s1 = KernelSpace::new(1).unwrap();
        let e3 = s1.representer(0.3);
        let e7 = s1.representer(0.7);
        assert!((e3.inner(&e7).unwrap() - 1.3).abs() < 1e-15);

        let kn = SpanElement::new(s2, vec![0.0, 0.0], vec![(0.5, 1.0)]).unwrap();
        assert_eq!(z0.inner(&kn).unwrap(), 0.0);
    }

    #[test]
    fn inner_space_mismatch() {
        let a = SpanElement::zero(KernelSpace::new(1).unwrap());
        let b = SpanElement::zero(KernelSpace::new(2).unwrap());
        assert!(matches!(
            a.inner(&b),
            Err(SplineError::SpaceMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn norm_examples() {
        let s1 = KernelSpace::new(1).unwrap();
        let zero = SpanElement::zero(s1);
        let n = zero.norms();
        assert_eq!((n.h0, n.h1, n.full), (0.0, 0.0, 0.0));

        let kn = SpanElement::new(s1, vec![0.0], vec![(0.5, 1.0)]).unwrap();
        assert!((kn.norms().h1 - 0.5f64.sqrt()).abs() < 1e-15);

        let s2 = KernelSpace::new(2).unwrap();
        let poly = SpanElement::polynomial(s2, vec![3.0, 4.0]).unwrap();
        let n = poly.norms();
        assert_eq!(n.h1, 0.0);
        assert!((n.h0 - 5.0).abs() < 1e-15);
        assert!((n.full - 5.0).abs() < 1e-15);
    }

    #[test]
    fn representer_lipschitz_and_uniform_bound() {
        for m in 1..=3 {
            let space = KernelSpace::new(m).unwrap();
            let grid: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
            let mut alpha: f64 = 0.0;
            let mut lipschitz: f64 = 0.0;
            for w in grid.windows(2) {
                let (s, t) = (w[0], w[1]);
                let d2 = space.kernel(s, s) - 2.0 * space.kernel(s, t) + space.kernel(t, t);
                lipschitz = lipschitz.max(d2.max(0.0).sqrt() / (t - s));
                alpha = alpha.max(space.kernel(t, t).sqrt());
            }
            assert!(alpha.is_finite() && alpha > 0.0);
            assert!(lipschitz.is_finite());
            // the sup of ||eta_t|| over [0,1] sits at t = 1
            assert!((alpha - space.kernel(1.0, 1.0).sqrt()).abs() < 1e-12);
            println!("m={m}: alpha={alpha:.6} lipschitz={lipschitz:.6}");
        }
    }

    proptest! {
        #[test]
        fn reproducing_property(seed in 0u64..500, m in 1usize..=3) {
            let space = KernelSpace::new(m).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mu = random_element(&mut rng, space, 6);
            let t = rng.random::<f64>();
            let eta = space.representer(t);
            let lhs = eta.inner(&mu).unwrap();
            let rhs = mu.evaluate(t);
            prop_assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        }

        #[test]
        fn kernel_gram_is_psd(seed in 0u64..200, m in 1usize..=3, n in 1usize..20) {
            let space = KernelSpace::new(m).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            for part in [KernelPart::K, KernelPart::K1] {
                let g = space.gram(&pts, part).unwrap();
                prop_assert_eq!(&g, &g.transpose());
                let eig = SymmetricEigen::new(g);
                let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
                prop_assert!(min >= -1e-10, "min eigenvalue {min}");
            }
        }

        #[test]
        fn inner_is_symmetric_and_psd(seed in 0u64..200, m in 1usize..=3) {
            let space = KernelSpace::new(m).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_element(&mut rng, space, 5);
            let b = random_element(&mut rng, space, 5);
            let ab = a.inner(&b).unwrap();
            let ba = b.inner(&a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(a.inner(&a).unwrap() >= -1e-12);
        }
    }
}
