//! Penalized least-squares fitting over the span of the polynomial basis
//! and the kernel sections at the design points.
//!
//! With `Sigma[i][j] = K1(t_i, t_j)` and `T[i][j] = zeta_j(t_i)`, the
//! minimizer of `(1/n) sum (y_i - mu(t_i))^2 + lambda |mu|_1^2` over that
//! span solves the bordered symmetric system
//!
//! ```text
//! [ Sigma + n*lambda*I   T ] [c]   [y]
//! [ T^T                  0 ] [d] = [0]
//! ```
//!
//! `fit` factors this system with Bunch-Kaufman pivoting; `fit_bruteforce`
//! minimizes the same objective through the dense unconstrained normal
//! equations in the full (d, c) coordinate block, solved in double-double
//! arithmetic so it stays a trustworthy oracle even where the squared
//! conditioning of that formulation exceeds what f64 can resolve.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SplineError};
use crate::linalg::dd::{Dd, DdMatrix};
use crate::linalg::{condition_estimate, BunchKaufman};
use crate::model::Dataset;
use crate::rkhs::{KernelPart, KernelSpace, SpanElement, SpanNorms};

/// Tolerance below which two design points count as coincident.
pub const KNOT_TOLERANCE: f64 = 1e-12;

/// Condition estimate above which diagnostics flag the solve.
pub const CONDITION_WARN: f64 = 1e12;

/// Regularization schedule `lambda_n = scale * n^-p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSchedule {
    scale: f64,
    p: f64,
}

impl LambdaSchedule {
    pub fn new(p: f64, scale: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.5) {
            return Err(SplineError::InvalidParameter(format!(
                "scaling exponent p = {p} outside (0, 1.5]"
            )));
        }
        if !scale.is_finite() || scale <= 0.0 {
            return Err(SplineError::InvalidParameter(format!(
                "lambda scale {scale} must be positive"
            )));
        }
        Ok(LambdaSchedule { scale, p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn lambda_for(&self, n: usize) -> f64 {
        self.scale * (n as f64).powf(-self.p)
    }
}

/// System matrices of the span formulation.
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    /// n x n Gram of the penalized kernel at the design points.
    pub sigma: DMatrix<f64>,
    /// n x m matrix of polynomial basis values at the design points.
    pub basis: DMatrix<f64>,
}

/// Post-solve diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Relative residual of the bordered system at the returned solution.
    pub residual: f64,
    /// Two-norm condition estimate of the bordered matrix.
    pub condition_estimate: f64,
    /// Set when the condition estimate exceeds 1e12.
    pub ill_conditioned: bool,
    /// Set when lambda = 0 (pure interpolation).
    pub interpolating: bool,
}

/// A solved spline: representer weights `c` at the design knots plus
/// polynomial coefficients `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineFit {
    space: KernelSpace,
    knots: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub lambda: f64,
    pub diagnostics: FitDiagnostics,
}

impl SplineFit {
    pub fn space(&self) -> KernelSpace {
        self.space
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for (j, &dj) in self.d.iter().enumerate() {
            acc += dj * self.space.zeta(j, t);
        }
        for (&s, &ci) in self.knots.iter().zip(&self.c) {
            acc += ci * self.space.k1(s, t);
        }
        acc
    }

    pub fn to_span_element(&self) -> SpanElement {
        SpanElement::new(
            self.space,
            self.d.clone(),
            self.knots
                .iter()
                .copied()
                .zip(self.c.iter().copied())
                .collect(),
        )
        .expect("fit coefficients always form a valid element")
    }

    /// (h0, h1, full) norms of the fitted element.
    pub fn norms(&self) -> SpanNorms {
        self.to_span_element().norms()
    }
}

/// Validate the design and build the system matrices.
pub fn assemble(space: KernelSpace, design: &[f64], lambda: f64) -> Result<SystemMatrices> {
    if design.is_empty() {
        return Err(SplineError::EmptyPoints);
    }
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(SplineError::InvalidParameter(format!(
            "lambda = {lambda} must be nonnegative"
        )));
    }
    let m = space.order();
    if design.len() < m {
        return Err(SplineError::TooFewPoints {
            distinct: design.len(),
            required: m,
        });
    }
    let mut order: Vec<usize> = (0..design.len()).collect();
    order.sort_by(|&i, &j| design[i].partial_cmp(&design[j]).unwrap());
    for w in order.windows(2) {
        let (i, j) = (w[0], w[1]);
        if (design[j] - design[i]).abs() < KNOT_TOLERANCE {
            return Err(SplineError::DuplicateKnots {
                i,
                j,
                a: design[i],
                b: design[j],
            });
        }
    }
    let sigma = space.gram(design, KernelPart::K1)?;
    let n = design.len();
    let basis = DMatrix::from_fn(n, m, |i, j| space.zeta(j, design[i]));
    Ok(SystemMatrices { sigma, basis })
}

fn bordered_matrix(sys: &SystemMatrices, n: usize, lambda: f64) -> DMatrix<f64> {
    let m = sys.basis.ncols();
    let dim = n + m;
    let mut a = DMatrix::zeros(dim, dim);
    a.view_mut((0, 0), (n, n)).copy_from(&sys.sigma);
    for i in 0..n {
        a[(i, i)] += n as f64 * lambda;
    }
    a.view_mut((0, n), (n, m)).copy_from(&sys.basis);
    a.view_mut((n, 0), (m, n)).copy_from(&sys.basis.transpose());
    a
}

/// Minimize the empirical objective by the bordered-system route.
pub fn fit(space: KernelSpace, dataset: &Dataset, lambda: f64) -> Result<SplineFit> {
    let sys = assemble(space, &dataset.design, lambda)?;
    let n = dataset.len();
    let m = space.order();
    let a = bordered_matrix(&sys, n, lambda);
    let mut rhs = DVector::zeros(n + m);
    for i in 0..n {
        rhs[i] = dataset.responses[i];
    }
    let factors = BunchKaufman::factor(a.clone())?;
    let z = factors.solve_vec(&rhs);
    let residual = {
        let r = &a * &z - &rhs;
        let scale = rhs.norm().max(1e-300);
        r.norm() / scale
    };
    let cond = condition_estimate(&a, &factors);
    Ok(SplineFit {
        space,
        knots: dataset.design.clone(),
        c: z.rows(0, n).iter().copied().collect(),
        d: z.rows(n, m).iter().copied().collect(),
        lambda,
        diagnostics: FitDiagnostics {
            residual,
            condition_estimate: cond,
            ill_conditioned: cond > CONDITION_WARN,
            interpolating: lambda == 0.0,
        },
    })
}

/// Minimize the same objective by forming the dense (m+n)-dimensional
/// first-order system in the (d, c) coordinates, with no constraint
/// elimination, and solving it in double-double arithmetic. Intended as an
/// independent oracle for moderate n (<= 200 or so).
pub fn fit_bruteforce(space: KernelSpace, dataset: &Dataset, lambda: f64) -> Result<SplineFit> {
    let sys = assemble(space, &dataset.design, lambda)?;
    let n = dataset.len();
    let m = space.order();
    let dim = m + n;

    // B = [T Sigma] (n x dim); system (B^T B / n + lambda * P) z = B^T y / n
    // with P = diag(0_m, Sigma), z = (d, c). All products accumulate in
    // double-double from the f64 blocks.
    let mut b = DMatrix::zeros(n, dim);
    b.view_mut((0, 0), (n, m)).copy_from(&sys.basis);
    b.view_mut((0, m), (n, n)).copy_from(&sys.sigma);
    let btb = DdMatrix::at_b(&b, &b);
    let inv_n = Dd::from_f64(1.0) / Dd::from_f64(n as f64);
    let mut a = btb.scale(inv_n);
    let lam = Dd::from_f64(lambda);
    for i in 0..n {
        for j in 0..n {
            let p = lam * Dd::from_f64(sys.sigma[(i, j)]);
            a[(m + i, m + j)] = a[(m + i, m + j)] + p;
        }
    }
    let y = DMatrix::from_fn(n, 1, |i, _| dataset.responses[i]);
    let rhs = DdMatrix::at_b(&b, &y).scale(inv_n);

    let z = match a.cholesky() {
        Some(l) => {
            let fwd = l.solve_lower(&rhs);
            l.solve_lower_transpose(&fwd)
        }
        None => a.lu_solve(&rhs).ok_or_else(|| {
            SplineError::SingularSystem(
                "brute-force normal equations are singular (zero-measure design geometry)".into(),
            )
        })?,
    };

    let d: Vec<f64> = (0..m).map(|j| z[(j, 0)].to_f64()).collect();
    let c: Vec<f64> = (0..n).map(|i| z[(m + i, 0)].to_f64()).collect();

    // residual of the f64-rounded solution in the dd system
    let residual = {
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for i in 0..dim {
            let mut acc = Dd::from_f64(0.0);
            for j in 0..dim {
                acc = acc + a[(i, j)] * z[(j, 0)];
            }
            num += (acc - rhs[(i, 0)]).to_f64().powi(2);
            den += rhs[(i, 0)].to_f64().powi(2);
        }
        (num / den.max(1e-300)).sqrt()
    };
    Ok(SplineFit {
        space,
        knots: dataset.design.clone(),
        c,
        d,
        lambda,
        diagnostics: FitDiagnostics {
            residual,
            condition_estimate: f64::NAN,
            ill_conditioned: false,
            interpolating: lambda == 0.0,
        },
    })
}

/// Exact empirical objective `(1/n) sum (y_i - mu(t_i))^2 + lambda |mu|_1^2`.
pub fn empirical_risk(element: &SpanElement, dataset: &Dataset, lambda: f64) -> Result<f64> {
    if element.space().order() != dataset.truth.space().order() {
        return Err(SplineError::SpaceMismatch {
            left: element.space().order(),
            right: dataset.truth.space().order(),
        });
    }
    let n = dataset.len() as f64;
    let mut acc = 0.0;
    for (t, y) in dataset.design.iter().zip(&dataset.responses) {
        let r = y - element.evaluate(*t);
        acc += r * r;
    }
    let h1 = element.norms().h1;
    Ok(acc / n + lambda * h1 * h1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DesignDistribution, NoiseModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset_from(space: KernelSpace, design: Vec<f64>, responses: Vec<f64>) -> Dataset {
        Dataset {
            design,
            responses,
            sigma: 0.0,
            seed: 0,
            truth: SpanElement::zero(space),
        }
    }

    fn random_dataset(space: KernelSpace, n: usize, sigma: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = SpanElement::new(
            space,
            (0..space.order())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
            vec![
                (rng.random::<f64>(), rng.random_range(-1.5..1.5)),
                (rng.random::<f64>(), rng.random_range(-1.5..1.5)),
            ],
        )
        .unwrap();
        Dataset::sample(
            &truth,
            &DesignDistribution::Uniform,
            &NoiseModel::gaussian(sigma).unwrap(),
            n,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn assemble_spot_values() {
        let s1 = KernelSpace::new(1).unwrap();
        let sys = assemble(s1, &[0.3, 0.7], 0.1).unwrap();
        assert!((sys.sigma[(0, 0)] - 0.3).abs() < 1e-15);
        assert!((sys.sigma[(0, 1)] - 0.3).abs() < 1e-15);
        assert!((sys.sigma[(1, 1)] - 0.7).abs() < 1e-15);
        assert_eq!(sys.basis, DMatrix::from_row_slice(2, 1, &[1.0, 1.0]));
    }

    #[test]
    fn assemble_rejects_too_few_points() {
        let s2 = KernelSpace::new(2).unwrap();
        assert!(matches!(
            assemble(s2, &[0.5], 0.1),
            Err(SplineError::TooFewPoints {
                distinct: 1,
                required: 2
            })
        ));
    }

    #[test]
    fn assemble_rejects_duplicates() {
        let s1 = KernelSpace::new(1).unwrap();
        assert!(matches!(
            assemble(s1, &[0.3, 0.3 + 1e-14], 0.1),
            Err(SplineError::DuplicateKnots { .. })
        ));
    }

    #[test]
    fn zero_data_gives_zero_fit() {
        let s2 = KernelSpace::new(2).unwrap();
        let ds = dataset_from(s2, vec![0.1, 0.4, 0.9], vec![0.0, 0.0, 0.0]);
        let f = fit(s2, &ds, 0.3).unwrap();
        assert!(f.c.iter().all(|&c| c.abs() < 1e-14));
        assert!(f.d.iter().all(|&d| d.abs() < 1e-14));
        assert_eq!(f.evaluate(0.77), 0.0);
        let bf = fit_bruteforce(s2, &ds, 0.3).unwrap();
        assert!(bf.c.iter().all(|&c| c.abs() < 1e-14));
        let zero = SpanElement::zero(s2);
        assert_eq!(empirical_risk(&zero, &ds, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn affine_truth_reproduced_exactly() {
        let s2 = KernelSpace::new(2).unwrap();
        let design = vec![0.1, 0.35, 0.55, 0.8, 0.95];
        let (a, b) = (1.3, -0.7);
        let responses: Vec<f64> = design.iter().map(|&t| a + b * t).collect();
        let ds = dataset_from(s2, design, responses);
        for lambda in [1e-4, 0.1, 10.0] {
            let f = fit(s2, &ds, lambda).unwrap();
            assert!((f.d[0] - a).abs() < 1e-9, "lambda {lambda}: d0 {}", f.d[0]);
            assert!((f.d[1] - b).abs() < 1e-9, "lambda {lambda}: d1 {}", f.d[1]);
            assert!(f.c.iter().all(|&c| c.abs() < 1e-9));
            assert!((f.evaluate(0.6) - (a + b * 0.6)).abs() < 1e-9);
        }
    }

    #[test]
    fn orthogonality_constraint_holds() {
        let s2 = KernelSpace::new(2).unwrap();
        let ds = random_dataset(s2, 25, 0.4, 5);
        let f = fit(s2, &ds, 0.05).unwrap();
        let sys = assemble(s2, &ds.design, 0.05).unwrap();
        let c = DVector::from_vec(f.c.clone());
        let tc = sys.basis.transpose() * &c;
        let scale = c.norm().max(1.0);
        assert!(tc.norm() / scale < 1e-8, "T^T c = {tc:?}");
    }

    #[test]
    fn representer_identity_residual() {
        // G_{n,lambda} mu = (1/n) sum y_i eta_i in coefficient space is the
        // pair of normal equations; check both blocks at the solution.
        let s2 = KernelSpace::new(2).unwrap();
        let ds = random_dataset(s2, 20, 0.5, 8);
        let lambda = 0.07;
        let f = fit(s2, &ds, lambda).unwrap();
        let sys = assemble(s2, &ds.design, lambda).unwrap();
        let n = ds.len();
        let c = DVector::from_vec(f.c.clone());
        let d = DVector::from_vec(f.d.clone());
        let y = DVector::from_vec(ds.responses.clone());
        let evals = &sys.basis * &d + &sys.sigma * &c;
        let r1 = sys.basis.transpose() * (&evals - &y);
        let r2 = &evals + &c * (n as f64 * lambda) - &y;
        let scale = y.norm();
        assert!(r1.norm() / scale < 1e-8);
        assert!(r2.norm() / scale < 1e-8);
    }

    #[test]
    fn brute_force_agrees_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for trial in 0..25 {
            let m = 1 + trial % 3;
            let space = KernelSpace::new(m).unwrap();
            let n = m + 3 + (trial % 10);
            let ds = random_dataset(space, n, 0.5, 1000 + trial as u64);
            let lambda = 10f64.powf(rng.random_range(-6.0..1.0));
            let a = fit(space, &ds, lambda).unwrap();
            let b = fit_bruteforce(space, &ds, lambda).unwrap();
            let num: f64 =
                a.c.iter()
                    .chain(&a.d)
                    .zip(b.c.iter().chain(&b.d))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
            let den: f64 = b.c.iter().chain(&b.d).map(|x| x * x).sum::<f64>().sqrt();
            assert!(
                num / den.max(1e-12) < 1e-8,
                "trial {trial} (m={m}, n={n}, lambda={lambda:.2e}): rel {}",
                num / den
            );
        }
    }

    #[test]
    fn objective_values_cross_check() {
        let s2 = KernelSpace::new(2).unwrap();
        let ds = random_dataset(s2, 15, 0.3, 77);
        let lambda = 0.02;
        let a = fit(s2, &ds, lambda).unwrap();
        let b = fit_bruteforce(s2, &ds, lambda).unwrap();
        let ra = empirical_risk(&a.to_span_element(), &ds, lambda).unwrap();
        let rb = empirical_risk(&b.to_span_element(), &ds, lambda).unwrap();
        assert!(ra <= rb + 1e-12);
        assert!(rb <= ra + 1e-12);
    }

    #[test]
    fn minimality_against_probes() {
        let s2 = KernelSpace::new(2).unwrap();
        let ds = random_dataset(s2, 18, 0.6, 13);
        let lambda = 0.1;
        let f = fit(s2, &ds, lambda).unwrap();
        let risk_fit = empirical_risk(&f.to_span_element(), &ds, lambda).unwrap();
        let risk_truth = empirical_risk(&ds.truth, &ds, lambda).unwrap();
        assert!(risk_fit <= risk_truth + 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..50 {
            let probe = SpanElement::new(
                s2,
                vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
                vec![(rng.random(), rng.random_range(-2.0..2.0))],
            )
            .unwrap();
            let risk_probe = empirical_risk(&probe, &ds, lambda).unwrap();
            assert!(risk_fit <= risk_probe + 1e-10);
        }
        // perturbations of the fit itself
        let base = f.to_span_element();
        for _ in 0..10 {
            let dir = SpanElement::new(
                s2,
                vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                vec![(rng.random(), rng.random_range(-1.0..1.0))],
            )
            .unwrap();
            let probe = base.difference(&dir.scaled(1e-3)).unwrap();
            let risk_probe = empirical_risk(&probe, &ds, lambda).unwrap();
            assert!(risk_fit <= risk_probe + 1e-10);
        }
    }

    #[test]
    fn interpolation_limit_reproduces_data() {
        let s2 = KernelSpace::new(2).unwrap();
        let design: Vec<f64> = (0..10).map(|i| 0.05 + 0.1 * i as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let responses: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ds = dataset_from(s2, design.clone(), responses.clone());
        let f = fit(s2, &ds, 1e-12).unwrap();
        for (t, y) in design.iter().zip(&responses) {
            assert!(
                (f.evaluate(*t) - y).abs() < 1e-6,
                "at {t}: {} vs {y}",
                f.evaluate(*t)
            );
        }
        let risk = empirical_risk(&f.to_span_element(), &ds, 0.0).unwrap();
        assert!(risk < 1e-10, "risk {risk}");
    }

    #[test]
    fn lambda_zero_interpolates_and_is_flagged() {
        let s1 = KernelSpace::new(1).unwrap();
        let ds = dataset_from(s1, vec![0.2, 0.5, 0.9], vec![1.0, -1.0, 2.0]);
        let f = fit(s1, &ds, 0.0).unwrap();
        assert!(f.diagnostics.interpolating);
        for (t, y) in ds.design.iter().zip(&ds.responses) {
            assert!((f.evaluate(*t) - y).abs() < 1e-9);
        }
    }

    #[test]
    fn roughness_monotone_in_lambda() {
        let s2 = KernelSpace::new(2).unwrap();
        let ds = random_dataset(s2, 30, 0.8, 21);
        let lambdas = [1e-6, 1e-4, 1e-2, 1.0, 100.0];
        let mut prev = f64::INFINITY;
        for &lambda in &lambdas {
            let h1 = fit(s2, &ds, lambda).unwrap().norms().h1;
            assert!(
                h1 <= prev + 1e-10,
                "h1 {h1} after {prev} at lambda {lambda}"
            );
            prev = h1;
        }
        // interpolation is rougher than a visibly smoothed fit
        let rough = fit(s2, &ds, 1e-10).unwrap().norms().h1;
        let smooth = fit(s2, &ds, 0.1).unwrap().norms().h1;
        assert!(rough > smooth);
    }

    #[test]
    fn fit_norms_examples() {
        let s2 = KernelSpace::new(2).unwrap();
        let ds = dataset_from(s2, vec![0.2, 0.6, 0.9], vec![0.0, 0.0, 0.0]);
        let f = fit(s2, &ds, 0.5).unwrap();
        let n = f.norms();
        assert_eq!((n.h0, n.h1, n.full), (0.0, 0.0, 0.0));

        let design = vec![0.1, 0.4, 0.7];
        let responses: Vec<f64> = design.iter().map(|&t| 3.0 + 4.0 * t).collect();
        let ds = dataset_from(s2, design, responses);
        let f = fit(s2, &ds, 0.2).unwrap();
        let n = f.norms();
        assert!((n.h0 - 5.0).abs() < 1e-8);
        assert!(n.h1 < 1e-8);
    }

    #[test]
    fn lambda_schedule_validation() {
        assert!(LambdaSchedule::new(0.25, 1.0).is_ok());
        assert!(LambdaSchedule::new(0.0, 1.0).is_err());
        assert!(LambdaSchedule::new(1.6, 1.0).is_err());
        assert!(LambdaSchedule::new(0.5, 0.0).is_err());
        let s = LambdaSchedule::new(0.5, 2.0).unwrap();
        assert!((s.lambda_for(100) - 0.2).abs() < 1e-15);
    }
}
