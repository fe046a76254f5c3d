//! Observation model: random designs on [0, 1], centered noise, synthetic
//! datasets, bounded linear functionals, and the population-limit objective
//! with its directional derivatives.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SplineError};
use crate::quad::{merge_breakpoints, GaussLegendre};
use crate::rkhs::SpanElement;

/// Distribution of the design points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DesignDistribution {
    Uniform,
    /// Piecewise-constant density: ascending `edges` delimit the bins,
    /// `weights[b]` is the probability mass of bin b (normalized
    /// internally). Bins may cover a sub-interval of [0, 1]; points are
    /// never drawn outside the listed bins.
    Piecewise {
        edges: Vec<f64>,
        weights: Vec<f64>,
    },
}

impl DesignDistribution {
    pub fn piecewise(edges: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || weights.len() + 1 != edges.len() {
            return Err(SplineError::InvalidDensity(format!(
                "{} edges with {} weights",
                edges.len(),
                weights.len()
            )));
        }
        for pair in edges.windows(2) {
            if !pair[1].is_finite() || !pair[0].is_finite() || pair[1] <= pair[0] {
                return Err(SplineError::InvalidDensity(
                    "bin edges must be strictly ascending".into(),
                ));
            }
        }
        if edges[0] < 0.0 || *edges.last().unwrap() > 1.0 {
            return Err(SplineError::InvalidDensity(
                "bin edges must lie in [0, 1]".into(),
            ));
        }
        if weights.iter().any(|&w| !w.is_finite() || w <= 0.0) {
            return Err(SplineError::InvalidDensity(
                "bin weights must be strictly positive".into(),
            ));
        }
        Ok(DesignDistribution::Piecewise { edges, weights })
    }

    /// Density value at t (0 outside the supported bins).
    pub fn density(&self, t: f64) -> f64 {
        match self {
            DesignDistribution::Uniform => {
                if (0.0..=1.0).contains(&t) {
                    1.0
                } else {
                    0.0
                }
            }
            DesignDistribution::Piecewise { edges, weights } => {
                let total: f64 = weights.iter().sum();
                for (b, pair) in edges.windows(2).enumerate() {
                    if t >= pair[0] && t <= pair[1] {
                        return weights[b] / total / (pair[1] - pair[0]);
                    }
                }
                0.0
            }
        }
    }

    /// Bin edges, used to split quadrature at density discontinuities.
    pub fn bin_edges(&self) -> Vec<f64> {
        match self {
            DesignDistribution::Uniform => vec![0.0, 1.0],
            DesignDistribution::Piecewise { edges, .. } => edges.clone(),
        }
    }

    /// Inverse CDF of a uniform draw in [0, 1).
    fn inverse_cdf(&self, u: f64) -> f64 {
        match self {
            DesignDistribution::Uniform => u,
            DesignDistribution::Piecewise { edges, weights } => {
                let total: f64 = weights.iter().sum();
                let mut cum = 0.0;
                for (b, pair) in edges.windows(2).enumerate() {
                    let p = weights[b] / total;
                    if u <= cum + p || b + 1 == weights.len() {
                        let frac = ((u - cum) / p).clamp(0.0, 1.0);
                        return pair[0] + frac * (pair[1] - pair[0]);
                    }
                    cum += p;
                }
                *edges.last().unwrap()
            }
        }
    }

    /// n iid draws by inverse CDF, deterministic in `seed`.
    pub fn sample_design(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(SplineError::InvalidParameter(
                "design size must be at least 1".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n).map(|_| self.inverse_cdf(rng.random())).collect())
    }
}

/// Centered noise with variance sigma^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseModel {
    Gaussian {
        sigma: f64,
    },
    /// Uniform on [-sigma*sqrt(3), sigma*sqrt(3)].
    UniformCentered {
        sigma: f64,
    },
}

impl NoiseModel {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if sigma < 0.0 || !sigma.is_finite() {
            return Err(SplineError::InvalidParameter(format!(
                "noise level {sigma} must be nonnegative"
            )));
        }
        Ok(NoiseModel::Gaussian { sigma })
    }

    pub fn uniform_centered(sigma: f64) -> Result<Self> {
        if sigma < 0.0 || !sigma.is_finite() {
            return Err(SplineError::InvalidParameter(format!(
                "noise level {sigma} must be nonnegative"
            )));
        }
        Ok(NoiseModel::UniformCentered { sigma })
    }

    pub fn sigma(&self) -> f64 {
        match *self {
            NoiseModel::Gaussian { sigma } | NoiseModel::UniformCentered { sigma } => sigma,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            NoiseModel::Gaussian { sigma } => {
                if sigma == 0.0 {
                    0.0
                } else {
                    Normal::new(0.0, sigma).unwrap().sample(rng)
                }
            }
            NoiseModel::UniformCentered { sigma } => {
                let half_width = sigma * 3.0f64.sqrt();
                (2.0 * rng.random::<f64>() - 1.0) * half_width
            }
        }
    }
}

/// One synthetic sample: design points, responses, and the generating
/// metadata kept for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub design: Vec<f64>,
    pub responses: Vec<f64>,
    pub sigma: f64,
    pub seed: u64,
    pub truth: SpanElement,
}

impl Dataset {
    /// y_i = truth(t_i) + eps_i with the design drawn first and the noise
    /// second from a single seeded stream.
    pub fn sample(
        truth: &SpanElement,
        dist: &DesignDistribution,
        noise: &NoiseModel,
        n: usize,
        seed: u64,
    ) -> Result<Dataset> {
        if n == 0 {
            return Err(SplineError::InvalidParameter(
                "dataset size must be at least 1".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let design: Vec<f64> = (0..n).map(|_| dist.inverse_cdf(rng.random())).collect();
        let responses: Vec<f64> = design
            .iter()
            .map(|&t| truth.evaluate(t) + noise.sample(&mut rng))
            .collect();
        Ok(Dataset {
            design,
            responses,
            sigma: noise.sigma(),
            seed,
            truth: truth.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.design.len()
    }

    pub fn is_empty(&self) -> bool {
        self.design.is_empty()
    }
}

/// A bounded linear functional used to probe convergence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FunctionalSpec {
    /// F(mu) = mu(t_star)
    PointEval { t_star: f64 },
    /// F(mu) = (mu, xi)
    InnerProduct { xi: SpanElement },
}

impl FunctionalSpec {
    pub fn point_eval(t_star: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t_star) {
            return Err(SplineError::InvalidParameter(format!(
                "evaluation point {t_star} outside [0, 1]"
            )));
        }
        Ok(FunctionalSpec::PointEval { t_star })
    }

    pub fn apply(&self, a: &SpanElement) -> Result<f64> {
        match self {
            FunctionalSpec::PointEval { t_star } => Ok(a.evaluate(*t_star)),
            FunctionalSpec::InnerProduct { xi } => a.inner(xi),
        }
    }

    /// The representing element: eta_{t*} for point evaluation, xi itself
    /// for an inner-product functional.
    pub fn representer(&self, space: crate::rkhs::KernelSpace) -> SpanElement {
        match self {
            FunctionalSpec::PointEval { t_star } => space.representer(*t_star),
            FunctionalSpec::InnerProduct { xi } => xi.clone(),
        }
    }
}

/// Population-limit objective
/// `f_inf(mu) = int (mu - truth)^2 dPhi_T + sigma^2`,
/// by Gauss-Legendre quadrature with `quad_nodes` nodes per smooth segment.
/// Segments are delimited by the density's bin edges and by the knots of
/// both elements, so piecewise-polynomial integrands are integrated exactly.
pub fn f_infinity(
    truth: &SpanElement,
    mu: &SpanElement,
    dist: &DesignDistribution,
    sigma: f64,
    quad_nodes: usize,
) -> Result<f64> {
    if quad_nodes < 2 {
        return Err(SplineError::InvalidParameter(
            "quadrature needs at least 2 nodes".into(),
        ));
    }
    let diff = mu.difference(truth)?;
    let rule = GaussLegendre::new(quad_nodes)?;
    let integral = integrate_against_density(&rule, dist, &[&diff], |vals| {
        let d = vals[0];
        d * d
    });
    Ok(integral + sigma * sigma)
}

/// First directional derivative of `f_infinity` at `mu` in direction `nu`:
/// `2 int (mu - truth) nu dPhi_T`.
pub fn gateaux_first(
    truth: &SpanElement,
    mu: &SpanElement,
    nu: &SpanElement,
    dist: &DesignDistribution,
    quad_nodes: usize,
) -> Result<f64> {
    if quad_nodes < 2 {
        return Err(SplineError::InvalidParameter(
            "quadrature needs at least 2 nodes".into(),
        ));
    }
    let diff = mu.difference(truth)?;
    let rule = GaussLegendre::new(quad_nodes)?;
    Ok(2.0 * integrate_against_density(&rule, dist, &[&diff, nu], |vals| vals[0] * vals[1]))
}

/// Second directional derivative, independent of `mu` and `truth`:
/// `2 int nu zeta dPhi_T`.
pub fn gateaux_second(
    nu: &SpanElement,
    zeta: &SpanElement,
    dist: &DesignDistribution,
    quad_nodes: usize,
) -> Result<f64> {
    if quad_nodes < 2 {
        return Err(SplineError::InvalidParameter(
            "quadrature needs at least 2 nodes".into(),
        ));
    }
    let rule = GaussLegendre::new(quad_nodes)?;
    Ok(2.0 * integrate_against_density(&rule, dist, &[nu, zeta], |vals| vals[0] * vals[1]))
}

fn integrate_against_density<F>(
    rule: &GaussLegendre,
    dist: &DesignDistribution,
    elements: &[&SpanElement],
    combine: F,
) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let mut extra: Vec<f64> = dist.bin_edges();
    for e in elements {
        extra.extend(e.breakpoints());
    }
    let support = dist.bin_edges();
    let (lo, hi) = (support[0], *support.last().unwrap());
    let breaks = merge_breakpoints(lo, hi, &extra);
    let mut vals = vec![0.0; elements.len()];
    rule.integrate_segments(&breaks, |t| {
        for (v, e) in vals.iter_mut().zip(elements) {
            *v = e.evaluate(t);
        }
        combine(&vals) * dist.density(t)
    })
}
