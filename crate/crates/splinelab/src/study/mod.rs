//! Batch Monte Carlo experiments over the regularization scaling
//! `lambda_n = scale * n^-p`.
//!
//! Four studies share one plan shape and one deterministic seeding scheme:
//! replicate r at size n always uses `seed::mix(base_seed, n, r)`, so a
//! given (n, r) cell sees the same dataset for every exponent p (common
//! random numbers) and results do not depend on worker count or execution
//! order.

pub mod config;
pub mod emit;

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, SplineError};
use crate::model::{Dataset, DesignDistribution, FunctionalSpec, NoiseModel};
use crate::rkhs::{KernelSpace, SpanElement};
use crate::seed;
use crate::solver::{empirical_risk, fit, LambdaSchedule};
use crate::spectral::rate_terms;

/// Which experiment to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    Converge,
    Blowup,
    Rate,
    Gamma,
}

impl StudyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StudyKind::Converge => "converge",
            StudyKind::Blowup => "blowup",
            StudyKind::Rate => "rate",
            StudyKind::Gamma => "gamma",
        }
    }

    pub fn parse(s: &str) -> Option<StudyKind> {
        match s {
            "converge" => Some(StudyKind::Converge),
            "blowup" => Some(StudyKind::Blowup),
            "rate" => Some(StudyKind::Rate),
            "gamma" => Some(StudyKind::Gamma),
            _ => None,
        }
    }
}

/// Thresholds for the exceedance-fraction statistics of the convergence
/// study.
pub const EXCEEDANCE_GRID: [f64; 3] = [0.01, 0.05, 0.25];

/// A fully specified experiment.
#[derive(Debug, Clone, Serialize)]
pub struct StudyPlan {
    pub study: StudyKind,
    pub space: KernelSpace,
    pub truth: SpanElement,
    pub design: DesignDistribution,
    pub noise: NoiseModel,
    pub functional: Option<FunctionalSpec>,
    pub n_grid: Vec<usize>,
    pub p_grid: Vec<f64>,
    pub lambda_scale: f64,
    pub replicates: usize,
    pub base_seed: u64,
    pub quad_nodes: usize,
    /// Number of probe elements for the gamma study.
    pub probes: usize,
    /// Also run the noiseless truth control arm of the gamma study.
    pub gamma_control: bool,
    /// How many leading replicates per cell get the spectral rate terms
    /// (they cost a dense factorization each).
    pub spectral_replicates: usize,
    pub out_dir: Option<PathBuf>,
}

impl StudyPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(SplineError::InvalidParameter("empty n_grid".into()));
        }
        for w in self.n_grid.windows(2) {
            if w[1] <= w[0] {
                return Err(SplineError::InvalidParameter(
                    "n_grid must be strictly ascending".into(),
                ));
            }
        }
        if self.n_grid[0] == 0 {
            return Err(SplineError::InvalidParameter("n_grid contains 0".into()));
        }
        if self.p_grid.is_empty() {
            return Err(SplineError::InvalidParameter("empty p_grid".into()));
        }
        for &p in &self.p_grid {
            LambdaSchedule::new(p, self.lambda_scale)?;
        }
        if self.replicates == 0 {
            return Err(SplineError::InvalidParameter(
                "replicates must be at least 1".into(),
            ));
        }
        if self.quad_nodes < 2 {
            return Err(SplineError::InvalidParameter(
                "quad_nodes must be at least 2".into(),
            ));
        }
        match self.study {
            StudyKind::Converge | StudyKind::Rate => {
                if self.functional.is_none() {
                    return Err(SplineError::InvalidParameter(format!(
                        "{} study needs a functional",
                        self.study.name()
                    )));
                }
            }
            StudyKind::Gamma => {
                if self.probes == 0 && !self.gamma_control {
                    return Err(SplineError::InvalidParameter(
                        "gamma study needs probes or the control arm".into(),
                    ));
                }
            }
            StudyKind::Blowup => {}
        }
        if self.truth.space() != self.space {
            return Err(SplineError::SpaceMismatch {
                left: self.truth.space().order(),
                right: self.space.order(),
            });
        }
        Ok(())
    }
}

/// One aggregated statistic cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatRow {
    pub study: String,
    pub m: usize,
    pub p: f64,
    pub n: usize,
    pub replicates: usize,
    pub statistic: String,
    pub mean: f64,
    pub std_error: f64,
    pub median: f64,
}

/// Fitted log-log slope of a statistic's mean against n.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeRow {
    pub study: String,
    pub p: f64,
    pub statistic: String,
    pub slope: f64,
    pub std_error: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyResult {
    pub rows: Vec<StatRow>,
    pub slopes: Vec<SlopeRow>,
    /// Exponent minimizing the mean functional error at the largest n
    /// (rate study only).
    pub best_p: Option<f64>,
}

impl StudyResult {
    pub fn mean_of(&self, p: f64, n: usize, statistic: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.p == p && r.n == n && r.statistic == statistic)
            .map(|r| r.mean)
    }

    pub fn slope_of(&self, p: f64, statistic: &str) -> Option<&SlopeRow> {
        self.slopes
            .iter()
            .find(|s| s.p == p && s.statistic == statistic)
    }
}

/// Ordinary least squares slope with its standard error; with `log_log`
/// set, both coordinates are mapped through ln first.
pub fn fit_slope(points: &[(f64, f64)], log_log: bool) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(SplineError::InvalidParameter(
            "slope needs at least two points".into(),
        ));
    }
    let mapped: Vec<(f64, f64)> = if log_log {
        for &(x, y) in points {
            if x <= 0.0 || y <= 0.0 {
                return Err(SplineError::InvalidParameter(format!(
                    "log-log slope needs positive coordinates, got ({x}, {y})"
                )));
            }
        }
        points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect()
    } else {
        points.to_vec()
    };
    let k = mapped.len() as f64;
    let mx = mapped.iter().map(|p| p.0).sum::<f64>() / k;
    let my = mapped.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = mapped.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx <= 0.0 {
        return Err(SplineError::InvalidParameter(
            "slope needs at least two distinct abscissas".into(),
        ));
    }
    let sxy: f64 = mapped.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = mapped
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    let se = if mapped.len() > 2 {
        (rss / (k - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok((slope, se))
}

fn mean_se_median(values: &[f64]) -> (f64, f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    let se = if k > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k as f64 - 1.0);
        (var / k as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    };
    (mean, se, median)
}

/// Per-study list of statistics whose mean-vs-n curves get fitted slopes.
fn slope_statistics(kind: StudyKind, gamma_control: bool) -> Vec<&'static str> {
    match kind {
        StudyKind::Converge => vec!["abs_err"],
        StudyKind::Blowup => vec!["norm2_h1", "norm2_full", "norm2_h0"],
        StudyKind::Rate => vec!["abs_err", "noise_term", "bias_term", "proj_term"],
        StudyKind::Gamma => {
            if gamma_control {
                vec!["gamma_gap", "gamma_gap_control"]
            } else {
                vec!["gamma_gap"]
            }
        }
    }
}

struct CellAccumulator {
    /// statistic name -> samples
    samples: Vec<(&'static str, Vec<f64>)>,
    excluded: usize,
}

impl CellAccumulator {
    fn new(stats: &[&'static str]) -> Self {
        CellAccumulator {
            samples: stats.iter().map(|&s| (s, Vec::new())).collect(),
            excluded: 0,
        }
    }

    fn push(&mut self, stat: &str, value: f64) {
        for (name, vals) in &mut self.samples {
            if *name == stat {
                vals.push(value);
                return;
            }
        }
        unreachable!("unknown statistic {stat}");
    }
}

fn emit_cell(rows: &mut Vec<StatRow>, plan: &StudyPlan, p: f64, n: usize, acc: &CellAccumulator) {
    for (stat, vals) in &acc.samples {
        if vals.is_empty() {
            continue;
        }
        let (mean, se, median) = mean_se_median(vals);
        rows.push(StatRow {
            study: plan.study.name().to_string(),
            m: plan.space.order(),
            p,
            n,
            replicates: vals.len(),
            statistic: stat.to_string(),
            mean,
            std_error: se,
            median,
        });
    }
    rows.push(StatRow {
        study: plan.study.name().to_string(),
        m: plan.space.order(),
        p,
        n,
        replicates: plan.replicates,
        statistic: "excluded".to_string(),
        mean: acc.excluded as f64,
        std_error: 0.0,
        median: acc.excluded as f64,
    });
}

fn compute_slopes(plan: &StudyPlan, rows: &[StatRow]) -> Vec<SlopeRow> {
    let mut out = Vec::new();
    for &p in &plan.p_grid {
        for stat in slope_statistics(plan.study, plan.gamma_control) {
            let points: Vec<(f64, f64)> = plan
                .n_grid
                .iter()
                .filter_map(|&n| {
                    rows.iter()
                        .find(|r| r.p == p && r.n == n && r.statistic == stat)
                        .filter(|r| r.mean > 0.0)
                        .map(|r| (n as f64, r.mean))
                })
                .collect();
            if points.len() < 4 {
                continue;
            }
            if let Ok((slope, se)) = fit_slope(&points, true) {
                out.push(SlopeRow {
                    study: plan.study.name().to_string(),
                    p,
                    statistic: stat.to_string(),
                    slope,
                    std_error: se,
                    points: points.len(),
                });
            }
        }
    }
    out
}

/// Dispatch on the plan's study kind.
pub fn run_study(plan: &StudyPlan) -> Result<StudyResult> {
    plan.validate()?;
    match plan.study {
        StudyKind::Converge => run_convergence_study(plan),
        StudyKind::Blowup => run_blowup_study(plan),
        StudyKind::Rate => run_rate_study(plan),
        StudyKind::Gamma => run_gamma_study(plan),
    }
}

/// |F(mu_n) - F(truth)| across the grid.
pub fn run_convergence_study(plan: &StudyPlan) -> Result<StudyResult> {
    plan.validate()?;
    let functional = plan.functional.as_ref().unwrap();
    let f_truth = functional.apply(&plan.truth)?;
    let stats: Vec<&'static str> = {
        let mut s = vec!["abs_err"];
        s.extend(["frac_exceed_0.01", "frac_exceed_0.05", "frac_exceed_0.25"]);
        s
    };

    let mut rows = Vec::new();
    for &p in &plan.p_grid {
        let schedule = LambdaSchedule::new(p, plan.lambda_scale)?;
        for &n in &plan.n_grid {
            let lambda = schedule.lambda_for(n);
            let outcomes: Vec<Result<f64>> = (0..plan.replicates)
                .into_par_iter()
                .map(|rep| {
                    let s = seed::mix(plan.base_seed, n as u64, rep as u64);
                    let ds = Dataset::sample(&plan.truth, &plan.design, &plan.noise, n, s)?;
                    let fitted = fit(plan.space, &ds, lambda)?;
                    let val = functional.apply(&fitted.to_span_element())?;
                    Ok((val - f_truth).abs())
                })
                .collect();
            let mut acc = CellAccumulator::new(&stats);
            for out in outcomes {
                match out {
                    Ok(err) => {
                        acc.push("abs_err", err);
                        for (tag, eps) in
                            ["frac_exceed_0.01", "frac_exceed_0.05", "frac_exceed_0.25"]
                                .iter()
                                .zip(EXCEEDANCE_GRID)
                        {
                            acc.push(tag, if err >= eps { 1.0 } else { 0.0 });
                        }
                    }
                    Err(_) => acc.excluded += 1,
                }
            }
            emit_cell(&mut rows, plan, p, n, &acc);
        }
    }
    let slopes = compute_slopes(plan, &rows);
    Ok(StudyResult {
        rows,
        slopes,
        best_p: None,
    })
}

/// Squared norms of the fit across the grid; the penalized part is the
/// blow-up indicator.
pub fn run_blowup_study(plan: &StudyPlan) -> Result<StudyResult> {
    plan.validate()?;
    let stats = ["norm2_full", "norm2_h1", "norm2_h0"];
    let mut rows = Vec::new();
    for &p in &plan.p_grid {
        let schedule = LambdaSchedule::new(p, plan.lambda_scale)?;
        for &n in &plan.n_grid {
            let lambda = schedule.lambda_for(n);
            let outcomes: Vec<Result<(f64, f64, f64)>> = (0..plan.replicates)
                .into_par_iter()
                .map(|rep| {
                    let s = seed::mix(plan.base_seed, n as u64, rep as u64);
                    let ds = Dataset::sample(&plan.truth, &plan.design, &plan.noise, n, s)?;
                    let fitted = fit(plan.space, &ds, lambda)?;
                    let norms = fitted.norms();
                    Ok((
                        norms.full * norms.full,
                        norms.h1 * norms.h1,
                        norms.h0 * norms.h0,
                    ))
                })
                .collect();
            let mut acc = CellAccumulator::new(&stats);
            for out in outcomes {
                match out {
                    Ok((full, h1, h0)) => {
                        acc.push("norm2_full", full);
                        acc.push("norm2_h1", h1);
                        acc.push("norm2_h0", h0);
                    }
                    Err(_) => acc.excluded += 1,
                }
            }
            emit_cell(&mut rows, plan, p, n, &acc);
        }
    }
    let slopes = compute_slopes(plan, &rows);
    Ok(StudyResult {
        rows,
        slopes,
        best_p: None,
    })
}

/// Realized functional error plus the closed-form bias / projection / noise
/// terms on the leading replicates.
pub fn run_rate_study(plan: &StudyPlan) -> Result<StudyResult> {
    plan.validate()?;
    let functional = plan.functional.as_ref().unwrap();
    let f_truth = functional.apply(&plan.truth)?;
    let xi = functional.representer(plan.space);
    let sigma = plan.noise.sigma();
    let stats = ["abs_err", "bias_term", "proj_term", "noise_term"];

    let mut rows = Vec::new();
    for &p in &plan.p_grid {
        let schedule = LambdaSchedule::new(p, plan.lambda_scale)?;
        for &n in &plan.n_grid {
            let lambda = schedule.lambda_for(n);
            type RateSample = (f64, Option<crate::spectral::RateTerms>);
            let outcomes: Vec<Result<RateSample>> = (0..plan.replicates)
                .into_par_iter()
                .map(|rep| {
                    let s = seed::mix(plan.base_seed, n as u64, rep as u64);
                    let ds = Dataset::sample(&plan.truth, &plan.design, &plan.noise, n, s)?;
                    let fitted = fit(plan.space, &ds, lambda)?;
                    let val = functional.apply(&fitted.to_span_element())?;
                    let terms = if rep < plan.spectral_replicates {
                        Some(rate_terms(
                            plan.space,
                            &ds.design,
                            &plan.truth,
                            &xi,
                            lambda,
                            sigma,
                        )?)
                    } else {
                        None
                    };
                    Ok(((val - f_truth).abs(), terms))
                })
                .collect();
            let mut acc = CellAccumulator::new(&stats);
            for out in outcomes {
                match out {
                    Ok((err, terms)) => {
                        acc.push("abs_err", err);
                        if let Some(t) = terms {
                            acc.push("bias_term", t.bias_term);
                            acc.push("proj_term", t.proj_term);
                            acc.push("noise_term", t.noise_term);
                        }
                    }
                    Err(_) => acc.excluded += 1,
                }
            }
            emit_cell(&mut rows, plan, p, n, &acc);
        }
    }
    let slopes = compute_slopes(plan, &rows);
    // error-minimizing exponent at the largest n
    let n_max = *plan.n_grid.last().unwrap();
    let best_p = plan
        .p_grid
        .iter()
        .filter_map(|&p| {
            rows.iter()
                .find(|r| r.p == p && r.n == n_max && r.statistic == "abs_err")
                .map(|r| (p, r.mean))
        })
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(p, _)| p);
    Ok(StudyResult {
        rows,
        slopes,
        best_p,
    })
}

/// Gap between the empirical objective and its population limit at fixed
/// probe elements.
pub fn run_gamma_study(plan: &StudyPlan) -> Result<StudyResult> {
    plan.validate()?;
    let sigma = plan.noise.sigma();
    // seeded probe family
    let probes: Vec<SpanElement> = (0..plan.probes)
        .map(|k| {
            random_probe(
                plan.space,
                seed::mix(plan.base_seed, seed::PROBE_SALT, k as u64),
            )
        })
        .collect();
    let f_inf: Vec<f64> = probes
        .iter()
        .map(|probe| {
            crate::model::f_infinity(&plan.truth, probe, &plan.design, sigma, plan.quad_nodes)
        })
        .collect::<Result<_>>()?;
    let probe_h1_sq: Vec<f64> = probes
        .iter()
        .map(|probe| {
            let h1 = probe.norms().h1;
            h1 * h1
        })
        .collect();
    let truth_h1_sq = {
        let h1 = plan.truth.norms().h1;
        h1 * h1
    };
    let noiseless = NoiseModel::gaussian(0.0)?;

    let mut stats = vec!["gamma_gap", "lambda_penalty_term"];
    if plan.gamma_control {
        stats.push("gamma_gap_control");
    }

    // data-fit parts are lambda-free; compute them once per (n, rep)
    struct GammaSample {
        probe_fit: Vec<f64>,
        control_fit: Option<f64>,
    }

    let mut rows = Vec::new();
    let mut per_n: Vec<Vec<Result<GammaSample>>> = Vec::new();
    for &n in &plan.n_grid {
        let outcomes: Vec<Result<GammaSample>> = (0..plan.replicates)
            .into_par_iter()
            .map(|rep| {
                let s = seed::mix(plan.base_seed, n as u64, rep as u64);
                let ds = Dataset::sample(&plan.truth, &plan.design, &plan.noise, n, s)?;
                let probe_fit = probes
                    .iter()
                    .map(|probe| empirical_risk(probe, &ds, 0.0))
                    .collect::<Result<Vec<f64>>>()?;
                let control_fit = if plan.gamma_control {
                    let ds0 = Dataset::sample(&plan.truth, &plan.design, &noiseless, n, s)?;
                    Some(empirical_risk(&plan.truth, &ds0, 0.0)?)
                } else {
                    None
                };
                Ok(GammaSample {
                    probe_fit,
                    control_fit,
                })
            })
            .collect();
        per_n.push(outcomes);
    }

    for &p in &plan.p_grid {
        let schedule = LambdaSchedule::new(p, plan.lambda_scale)?;
        for (ni, &n) in plan.n_grid.iter().enumerate() {
            let lambda = schedule.lambda_for(n);
            let mut acc = CellAccumulator::new(&stats);
            for out in &per_n[ni] {
                match out {
                    Ok(sample) => {
                        for (k, fit_part) in sample.probe_fit.iter().enumerate() {
                            let f_n = fit_part + lambda * probe_h1_sq[k];
                            acc.push("gamma_gap", (f_n - f_inf[k]).abs());
                            acc.push("lambda_penalty_term", lambda * probe_h1_sq[k]);
                        }
                        if let Some(cf) = sample.control_fit {
                            let f_n = cf + lambda * truth_h1_sq;
                            // population objective of the noiseless control is 0
                            acc.push("gamma_gap_control", f_n.abs());
                        }
                    }
                    Err(_) => acc.excluded += 1,
                }
            }
            emit_cell(&mut rows, plan, p, n, &acc);
        }
    }
    let slopes = compute_slopes(plan, &rows);
    Ok(StudyResult {
        rows,
        slopes,
        best_p: None,
    })
}

/// Probe family for the gamma study: a couple of polynomial coefficients
/// and knots drawn from the probe stream.
fn random_probe(space: KernelSpace, probe_seed: u64) -> SpanElement {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(probe_seed);
    let poly = (0..space.order())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let k = rng.random_range(2..=4usize);
    let knots = (0..k)
        .map(|_| (rng.random::<f64>(), rng.random_range(-1.0..1.0)))
        .collect();
    SpanElement::new(space, poly, knots).expect("probe construction is always valid")
}
