//! Spectral quantities of the empirical operator `U_n = (1/n) sum eta_i L_i`
//! and its regularized companion `G = U_n + lambda * chi1`, in the
//! (m+n)-dimensional coefficient basis `(zeta_0 .. zeta_{m-1},
//! chi1 eta_{t_1} .. chi1 eta_{t_n})`.
//!
//! In that basis `U = (1/n) [[T^T T, T^T S], [T, S]]` with `S` the penalized
//! Gram, the basis Gram is `M = diag(I_m, S)`, and both U and G are
//! self-adjoint in the M-metric. `U` restricted to the span of the kernel
//! sections acts as `a -> K a / n` with `K` the full-kernel Gram, which is
//! where its eigenvalues come from.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SplineError};
use crate::linalg::dd::{Dd, DdMatrix};
use crate::rkhs::{KernelPart, KernelSpace, SpanElement};
use crate::solver::assemble;

/// Coefficient matrices of the empirical operators on the (m+n) basis.
#[derive(Debug, Clone)]
pub struct OperatorMatrices {
    /// Coefficient matrix of U_n (not symmetric as an array; M-self-adjoint).
    pub u: DMatrix<f64>,
    /// Coefficient matrix of G = U + lambda * diag(0_m, I_n).
    pub g: DMatrix<f64>,
    /// Basis Gram diag(I_m, S); the metric of the span.
    pub m_gram: DMatrix<f64>,
    /// Penalized Gram S, kept for projections.
    pub sigma: DMatrix<f64>,
    /// Polynomial basis values at the design points (n x m).
    pub basis: DMatrix<f64>,
    pub lambda: f64,
}

impl OperatorMatrices {
    pub fn order(&self) -> usize {
        self.basis.ncols()
    }

    pub fn n(&self) -> usize {
        self.basis.nrows()
    }
}

/// Spectral summary serialized by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralReport {
    pub betas: Vec<f64>,
    pub op_norm: f64,
    pub inv_beta_sum: f64,
    pub cutoff: f64,
    pub rank: usize,
}

/// The three terms of the error decomposition
/// `F(mu_n) - F(truth) = ((G^-1 U - chi_ran) truth, xi)
///                      - (chi_ran_perp truth, xi) + (G^-1 nu_n, xi)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RateTerms {
    pub bias_term: f64,
    pub proj_term: f64,
    pub noise_term: f64,
}

/// Build U, G and M for a design.
pub fn build_operators(
    space: KernelSpace,
    design: &[f64],
    lambda: f64,
) -> Result<OperatorMatrices> {
    let sys = assemble(space, design, lambda)?;
    let n = design.len();
    let m = space.order();
    let dim = m + n;
    let inv_n = 1.0 / n as f64;
    let mut u = DMatrix::zeros(dim, dim);
    u.view_mut((0, 0), (m, m))
        .copy_from(&(sys.basis.transpose() * &sys.basis * inv_n));
    u.view_mut((0, m), (m, n))
        .copy_from(&(sys.basis.transpose() * &sys.sigma * inv_n));
    u.view_mut((m, 0), (n, m)).copy_from(&(&sys.basis * inv_n));
    u.view_mut((m, m), (n, n)).copy_from(&(&sys.sigma * inv_n));
    let mut g = u.clone();
    for i in m..dim {
        g[(i, i)] += lambda;
    }
    let mut m_gram = DMatrix::zeros(dim, dim);
    for i in 0..m {
        m_gram[(i, i)] = 1.0;
    }
    m_gram.view_mut((m, m), (n, n)).copy_from(&sys.sigma);
    Ok(OperatorMatrices {
        u,
        g,
        m_gram,
        sigma: sys.sigma,
        basis: sys.basis,
        lambda,
    })
}

/// Eigenvalues of U_n on the span of the kernel sections: the eigenvalues
/// of K/n with K the full-kernel Gram, descending.
pub fn un_spectrum(space: KernelSpace, design: &[f64]) -> Result<Vec<f64>> {
    assemble(space, design, 0.0)?;
    let k = space.gram(design, KernelPart::K)?;
    let n = design.len() as f64;
    Ok(crate::linalg::sym_eigenvalues_desc(k / n))
}

/// Sum of reciprocals of the eigenvalues exceeding `cutoff`; also returns
/// how many were discarded.
pub fn inv_beta_sum(betas: &[f64], cutoff: f64) -> Result<(f64, usize)> {
    if !cutoff.is_finite() || cutoff <= 0.0 {
        return Err(SplineError::InvalidParameter(format!(
            "cutoff {cutoff} must be positive"
        )));
    }
    let mut sum = 0.0;
    let mut discarded = 0usize;
    for &b in betas {
        if b > cutoff {
            sum += 1.0 / b;
        } else {
            discarded += 1;
        }
    }
    Ok((sum, discarded))
}

/// Default eigenvalue cutoff: 1e-12 times the largest eigenvalue.
pub fn default_cutoff(betas: &[f64]) -> f64 {
    let max = betas.iter().cloned().fold(0.0f64, f64::max);
    (1e-12 * max).max(f64::MIN_POSITIVE)
}

/// Contraction factor of `G^-1 U_n` in the M-metric, off the unpenalized
/// polynomial subspace that the operator fixes.
///
/// `G^-1 U` leaves every polynomial invariant (eigenvalue one, multiplicity
/// m, exactly). This returns the largest generalized eigenvalue of the
/// pencil `(M U, M G)` on the complement of that trivial block: a value in
/// [0, 1] that tends to one as lambda -> 0 and decreases in lambda. The
/// whole reduction runs in double-double arithmetic so the bound can be
/// certified to far below the 1e-8 test tolerance even at lambda = 1e-8.
pub fn g_inverse_un_norm(space: KernelSpace, design: &[f64], lambda: f64) -> Result<f64> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(SplineError::InvalidParameter(format!(
            "lambda = {lambda} must be positive for the regularized operator"
        )));
    }
    let sys = assemble(space, design, lambda)?;
    let n = design.len();
    let m = space.order();
    let dim = m + n;

    // Uhat = M U (symmetric), Ghat = Uhat + lambda * diag(0, S), in dd.
    let mut b = DMatrix::zeros(n, dim);
    b.view_mut((0, 0), (n, m)).copy_from(&sys.basis);
    b.view_mut((0, m), (n, n)).copy_from(&sys.sigma);
    let inv_n = Dd::from_f64(1.0) / Dd::from_f64(n as f64);
    let uhat = DdMatrix::at_b(&b, &b).scale(inv_n);
    let mut ghat = uhat.clone();
    let lam = Dd::from_f64(lambda);
    for i in 0..n {
        for j in 0..n {
            let add = lam * Dd::from_f64(sys.sigma[(i, j)]);
            ghat[(m + i, m + j)] = ghat[(m + i, m + j)] + add;
        }
    }

    // Deflate the polynomial block: W = [-Gdd^-1 Gdc; I_n] spans the
    // Ghat-orthogonal complement of the polynomials.
    let mut gdd = DdMatrix::zeros(m, m);
    let mut gdc = DdMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..m {
            gdd[(i, j)] = ghat[(i, j)];
        }
        for j in 0..n {
            gdc[(i, j)] = ghat[(i, m + j)];
        }
    }
    let lpoly = gdd.cholesky().ok_or_else(|| {
        SplineError::SingularSystem("polynomial block of the operator is singular".into())
    })?;
    let x = lpoly.solve_lower_transpose(&lpoly.solve_lower(&gdc));
    let mut w = DdMatrix::zeros(dim, n);
    for i in 0..m {
        for j in 0..n {
            w[(i, j)] = Dd::from_f64(0.0) - x[(i, j)];
        }
    }
    for j in 0..n {
        w[(m + j, j)] = Dd::from_f64(1.0);
    }

    let u_red = w.transpose().matmul(&uhat.matmul(&w));
    let g_red = w.transpose().matmul(&ghat.matmul(&w));
    let l = g_red.cholesky().ok_or_else(|| {
        SplineError::SingularSystem(
            "reduced operator Gram is not positive definite (degenerate design)".into(),
        )
    })?;
    let s = l.solve_lower(&u_red);
    let c = l.solve_lower(&s.transpose());
    // symmetrize before the eigensolve
    let mut csym = DdMatrix::zeros(n, n);
    let half = Dd::from_f64(0.5);
    for i in 0..n {
        for j in 0..n {
            csym[(i, j)] = (c[(i, j)] + c[(j, i)]) * half;
        }
    }
    let theta = csym.jacobi_eigenvalues().first().copied().unwrap_or(0.0);
    Ok(theta.max(0.0))
}

/// Assemble a full spectral report for one design.
pub fn spectral_report(
    space: KernelSpace,
    design: &[f64],
    lambda: f64,
    cutoff: Option<f64>,
) -> Result<SpectralReport> {
    let betas = un_spectrum(space, design)?;
    let cutoff = cutoff.unwrap_or_else(|| default_cutoff(&betas));
    let (sum, discarded) = inv_beta_sum(&betas, cutoff)?;
    let op_norm = g_inverse_un_norm(space, design, lambda)?;
    let rank = betas.len() - discarded;
    Ok(SpectralReport {
        betas,
        op_norm,
        inv_beta_sum: sum,
        cutoff,
        rank,
    })
}

/// Solve `G z = rhs` (or the transposed system) in f64, switching to
/// double-double once lambda is small enough that the f64 forward error
/// would be visible at the 1e-6 scale of the limit checks.
fn solve_g(
    g: &DMatrix<f64>,
    rhs: &DVector<f64>,
    lambda: f64,
    transpose: bool,
) -> Result<DVector<f64>> {
    let work = if transpose { g.transpose() } else { g.clone() };
    if lambda >= 1e-6 {
        work.lu().solve(rhs).ok_or_else(|| {
            SplineError::SingularSystem("regularized operator matrix is singular".into())
        })
    } else {
        let dd = DdMatrix::from_f64(&work);
        let b = DdMatrix::from_f64(&DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice()));
        let x = dd.lu_solve(&b).ok_or_else(|| {
            SplineError::SingularSystem("regularized operator matrix is singular".into())
        })?;
        Ok(DVector::from_fn(rhs.len(), |i, _| x[(i, 0)].to_f64()))
    }
}

/// Bias, range-projection and noise terms of the error decomposition at one
/// design, for the functional represented by `xi`.
///
/// The projection onto the span of the kernel sections uses a
/// ridge-stabilized Gram solve (jitter 1e-12 * trace K), which is the
/// numerically meaningful projector once the Gram spectrum falls below
/// floating noise.
pub fn rate_terms(
    space: KernelSpace,
    design: &[f64],
    truth: &SpanElement,
    xi: &SpanElement,
    lambda: f64,
    sigma: f64,
) -> Result<RateTerms> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(SplineError::InvalidParameter(format!(
            "lambda = {lambda} must be positive"
        )));
    }
    if sigma < 0.0 {
        return Err(SplineError::InvalidParameter(format!(
            "sigma = {sigma} must be nonnegative"
        )));
    }
    let ops = build_operators(space, design, lambda)?;
    let n = design.len();
    let m = space.order();
    let dim = m + n;

    // r_k = (basis_k, xi)
    let mut r = DVector::zeros(dim);
    for j in 0..m {
        r[j] = xi.poly()[j];
    }
    for (i, &t) in design.iter().enumerate() {
        r[m + i] = xi
            .knots()
            .iter()
            .map(|&(s, wgt)| wgt * space.k1(t, s))
            .sum();
    }

    // (G^-1 U truth, xi): U truth = (1/n) sum truth(t_i) eta_i
    let evals = DVector::from_fn(n, |i, _| truth.evaluate(design[i]));
    let mut b = DVector::zeros(dim);
    let top = ops.basis.transpose() * &evals / n as f64;
    for j in 0..m {
        b[j] = top[j];
    }
    for i in 0..n {
        b[m + i] = evals[i] / n as f64;
    }
    let z = solve_g(&ops.g, &b, lambda, false)?;
    let smoothed = z.dot(&r);

    // chi_ran truth: ridge-stabilized K a = evals
    let k_gram = space.gram(design, KernelPart::K)?;
    let jitter = 1e-12 * k_gram.trace();
    let mut k_j = k_gram;
    for i in 0..n {
        k_j[(i, i)] += jitter;
    }
    let a = k_j
        .cholesky()
        .ok_or_else(|| SplineError::SingularSystem("kernel Gram not positive definite".into()))?
        .solve(&evals);
    let xi_at_design = DVector::from_fn(n, |i, _| xi.evaluate(design[i]));
    let projected = a.dot(&xi_at_design);

    let bias_term = (smoothed - projected).abs();
    let proj_term = (truth.inner(xi)? - projected).abs();

    // noise term (sigma/n) sqrt(sum_i (G^-1 eta_i, xi)^2); with rho solving
    // G^T rho = r, (G^-1 eta_i, xi) = eta_i . rho = (T rho_d)_i + rho_c_i
    let rho = solve_g(&ops.g, &r, lambda, true)?;
    let rho_d = rho.rows(0, m).clone_owned();
    let rho_c = rho.rows(m, n).clone_owned();
    let contrib = &ops.basis * rho_d + rho_c;
    let noise_term = sigma / n as f64 * contrib.norm();

    Ok(RateTerms {
        bias_term,
        proj_term,
        noise_term,
    })
}

/// Diagnostic for whether the projection chi1 maps the range of U_n into
/// itself: the worst relative distance of chi1 applied to a U_n
/// eigenfunction from its projection back onto the range. Zero would mean
/// the two operators can be diagonalized together.
pub fn chi1_range_defect(space: KernelSpace, design: &[f64]) -> Result<f64> {
    assemble(space, design, 0.0)?;
    let n = design.len();
    let k = space.gram(design, KernelPart::K)?;
    let sigma = space.gram(design, KernelPart::K1)?;
    let eig = nalgebra::SymmetricEigen::new(k.clone() / n as f64);
    let jitter = 1e-12 * k.trace();
    let mut k_j = k.clone();
    for i in 0..n {
        k_j[(i, i)] += jitter;
    }
    let chol = k_j
        .cholesky()
        .ok_or_else(|| SplineError::SingularSystem("kernel Gram not positive definite".into()))?;
    let mut worst = 0.0f64;
    for j in 0..n {
        let a = eig.eigenvectors.column(j).clone_owned();
        // chi1 psi has coefficients (0, a); norms in the M metric
        let sa = &sigma * &a;
        let norm_sq = a.dot(&sa);
        if norm_sq <= 1e-20 {
            continue;
        }
        // projection onto span{eta_i}: K q = S a
        let q = chol.solve(&sa);
        let defect_sq = (norm_sq - 2.0 * q.dot(&sa) + q.dot(&(&k * &q))).max(0.0);
        worst = worst.max((defect_sq / norm_sq).sqrt());
    }
    Ok(worst)
}
