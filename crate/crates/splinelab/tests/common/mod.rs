//! Shared helpers for the integration suites: an adaptive quadrature oracle
//! kept independent of the closed-form kernel path, and random element
//! generators.
#![allow(dead_code)] // each test binary uses its own subset

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splinelab::rkhs::{KernelSpace, SpanElement};

/// Adaptive Simpson integration with a relative error target.
pub fn adaptive_simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
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

/// Quadrature value of the penalized kernel block: the integral of the two
/// Green's sections over [0, min(s, t)].
pub fn k1_quadrature(space: KernelSpace, s: f64, t: f64) -> f64 {
    let hi = s.min(t);
    if hi == 0.0 {
        return 0.0;
    }
    adaptive_simpson(|u| space.greens(s, u) * space.greens(t, u), 0.0, hi, 1e-12)
}

pub fn random_element(rng: &mut ChaCha8Rng, space: KernelSpace, max_knots: usize) -> SpanElement {
    let poly = (0..space.order())
        .map(|_| rng.random_range(-2.0..2.0))
        .collect();
    let k = rng.random_range(0..=max_knots);
    let knots = (0..k)
        .map(|_| (rng.random::<f64>(), rng.random_range(-2.0..2.0)))
        .collect();
    SpanElement::new(space, poly, knots).unwrap()
}

pub fn random_design(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| 0.005 + 0.99 * rng.random::<f64>()).collect()
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
