//! Plain-text study configuration.
//!
//! The format is line-based `key = value` with `#` comments and one
//! optional section per study. Keys before any section header apply to all
//! studies; keys inside `[converge]`, `[blowup]`, `[rate]` or `[gamma]`
//! override the globals for that study. Unknown keys and unknown sections
//! are errors.
//!
//! ```text
//! m = 2
//! base_seed = 20270101
//! n_grid = 50 100 200 400 800
//! p_grid = 0.25
//! truth_knots = 0.35:1.0 0.8:0.5
//! noise = gaussian
//! sigma = 0.5
//!
//! [converge]
//! functional = point
//! functional_point = 0.5
//! replicates = 200
//! ```
//!
//! Recognized keys: `m`, `base_seed`, `replicates`, `n_grid`, `p_grid`,
//! `lambda_scale`, `quad_nodes`, `truth_poly`, `truth_knots`, `design`,
//! `design_edges`, `design_weights`, `noise`, `sigma`, `functional`,
//! `functional_point`, `xi_poly`, `xi_knots`, `probes`, `gamma_control`,
//! `spectral_replicates`, `out_dir`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Result, SplineError};
use crate::model::{DesignDistribution, FunctionalSpec, NoiseModel};
use crate::rkhs::{KernelSpace, SpanElement};
use crate::study::{StudyKind, StudyPlan};

const KNOWN_KEYS: &[&str] = &[
    "m",
    "base_seed",
    "replicates",
    "n_grid",
    "p_grid",
    "lambda_scale",
    "quad_nodes",
    "truth_poly",
    "truth_knots",
    "design",
    "design_edges",
    "design_weights",
    "noise",
    "sigma",
    "functional",
    "functional_point",
    "xi_poly",
    "xi_knots",
    "probes",
    "gamma_control",
    "spectral_replicates",
    "out_dir",
];

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

fn err(line: usize, message: impl Into<String>) -> SplineError {
    SplineError::Config {
        line,
        message: message.into(),
    }
}

/// Parse the configuration text into the plan for one study.
pub fn parse_study_config(text: &str, study: StudyKind) -> Result<StudyPlan> {
    let mut scopes: BTreeMap<String, BTreeMap<String, Entry>> = BTreeMap::new();
    scopes.insert(String::new(), BTreeMap::new());
    let mut current = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[') {
            let name = inner
                .strip_suffix(']')
                .ok_or_else(|| err(line_no, "unterminated section header"))?
                .trim()
                .to_string();
            if StudyKind::parse(&name).is_none() {
                return Err(err(
                    line_no,
                    format!("unknown section [{name}]; expected converge, blowup, rate or gamma"),
                ));
            }
            scopes.entry(name.clone()).or_default();
            current = name;
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(line_no, format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(err(line_no, format!("unknown key `{key}`")));
        }
        let scope = scopes.get_mut(&current).unwrap();
        if scope.contains_key(&key) {
            return Err(err(line_no, format!("duplicate key `{key}` in this scope")));
        }
        scope.insert(
            key,
            Entry {
                value,
                line: line_no,
            },
        );
    }

    let global = scopes.remove("").unwrap_or_default();
    let section = scopes.remove(study.name()).unwrap_or_default();
    let mut merged = global;
    for (k, v) in section {
        merged.insert(k, v);
    }
    build_plan(study, &merged)
}

fn get<'a>(map: &'a BTreeMap<String, Entry>, key: &str) -> Option<&'a Entry> {
    map.get(key)
}

fn require<'a>(map: &'a BTreeMap<String, Entry>, key: &str) -> Result<&'a Entry> {
    get(map, key).ok_or_else(|| err(0, format!("missing required key `{key}`")))
}

fn parse_scalar<T: std::str::FromStr>(entry: &Entry, what: &str) -> Result<T> {
    entry.value.parse::<T>().map_err(|_| {
        err(
            entry.line,
            format!("cannot parse `{}` as {what}", entry.value),
        )
    })
}

fn parse_list<T: std::str::FromStr>(entry: &Entry, what: &str) -> Result<Vec<T>> {
    entry
        .value
        .split_whitespace()
        .map(|tok| {
            tok.parse::<T>()
                .map_err(|_| err(entry.line, format!("cannot parse `{tok}` as {what}")))
        })
        .collect()
}

fn parse_knots(entry: &Entry) -> Result<Vec<(f64, f64)>> {
    entry
        .value
        .split_whitespace()
        .map(|tok| {
            let (s, w) = tok.split_once(':').ok_or_else(|| {
                err(
                    entry.line,
                    format!("knot `{tok}` must look like location:weight"),
                )
            })?;
            let s: f64 = s
                .parse()
                .map_err(|_| err(entry.line, format!("bad knot location in `{tok}`")))?;
            let w: f64 = w
                .parse()
                .map_err(|_| err(entry.line, format!("bad knot weight in `{tok}`")))?;
            Ok((s, w))
        })
        .collect()
}

fn build_plan(study: StudyKind, map: &BTreeMap<String, Entry>) -> Result<StudyPlan> {
    let m: usize = parse_scalar(require(map, "m")?, "an integer order")?;
    let space = KernelSpace::new(m)?;
    let base_seed: u64 = parse_scalar(require(map, "base_seed")?, "a 64-bit seed")?;
    let n_grid: Vec<usize> = parse_list(require(map, "n_grid")?, "a sample size")?;
    let p_grid: Vec<f64> = parse_list(require(map, "p_grid")?, "an exponent")?;

    let replicates = match get(map, "replicates") {
        Some(e) => parse_scalar(e, "a replicate count")?,
        None => 100,
    };
    let lambda_scale = match get(map, "lambda_scale") {
        Some(e) => parse_scalar(e, "a positive scale")?,
        None => 1.0,
    };
    let quad_nodes = match get(map, "quad_nodes") {
        Some(e) => parse_scalar(e, "a node count")?,
        None => 201,
    };
    let probes = match get(map, "probes") {
        Some(e) => parse_scalar(e, "a probe count")?,
        None => 3,
    };
    let spectral_replicates = match get(map, "spectral_replicates") {
        Some(e) => parse_scalar(e, "a replicate count")?,
        None => 3,
    };
    let gamma_control = match get(map, "gamma_control") {
        Some(e) => match e.value.as_str() {
            "true" => true,
            "false" => false,
            other => {
                return Err(err(
                    e.line,
                    format!("gamma_control must be true or false, got `{other}`"),
                ))
            }
        },
        None => false,
    };

    let truth_poly = match get(map, "truth_poly") {
        Some(e) => {
            let poly: Vec<f64> = parse_list(e, "a coefficient")?;
            if poly.len() != m {
                return Err(err(
                    e.line,
                    format!(
                        "truth_poly has {} coefficients, expected m = {m}",
                        poly.len()
                    ),
                ));
            }
            poly
        }
        None => vec![0.0; m],
    };
    let truth_knots = match get(map, "truth_knots") {
        Some(e) => parse_knots(e)?,
        None => Vec::new(),
    };
    let truth = SpanElement::new(space, truth_poly, truth_knots)?;

    let design = match get(map, "design").map(|e| (e.value.as_str(), e.line)) {
        None | Some(("uniform", _)) => DesignDistribution::Uniform,
        Some(("piecewise", line)) => {
            let edges = parse_list(
                get(map, "design_edges")
                    .ok_or_else(|| err(line, "piecewise design needs design_edges"))?,
                "an edge",
            )?;
            let weights = parse_list(
                get(map, "design_weights")
                    .ok_or_else(|| err(line, "piecewise design needs design_weights"))?,
                "a weight",
            )?;
            DesignDistribution::piecewise(edges, weights)?
        }
        Some((other, line)) => {
            return Err(err(line, format!("unknown design `{other}`")));
        }
    };

    let sigma = match get(map, "sigma") {
        Some(e) => parse_scalar(e, "a noise level")?,
        None => 0.0,
    };
    let noise = match get(map, "noise").map(|e| (e.value.as_str(), e.line)) {
        None | Some(("gaussian", _)) => NoiseModel::gaussian(sigma)?,
        Some(("uniform", _)) => NoiseModel::uniform_centered(sigma)?,
        Some((other, line)) => {
            return Err(err(line, format!("unknown noise `{other}`")));
        }
    };

    let functional = match get(map, "functional").map(|e| (e.value.as_str(), e.line)) {
        None => None,
        Some(("point", line)) => {
            let t = parse_scalar(
                get(map, "functional_point")
                    .ok_or_else(|| err(line, "point functional needs functional_point"))?,
                "a point",
            )?;
            Some(FunctionalSpec::point_eval(t)?)
        }
        Some(("inner", line)) => {
            let xi_poly = match get(map, "xi_poly") {
                Some(e) => {
                    let poly: Vec<f64> = parse_list(e, "a coefficient")?;
                    if poly.len() != m {
                        return Err(err(
                            e.line,
                            format!("xi_poly has {} coefficients, expected m = {m}", poly.len()),
                        ));
                    }
                    poly
                }
                None => vec![0.0; m],
            };
            let xi_knots = match get(map, "xi_knots") {
                Some(e) => parse_knots(e)?,
                None => Vec::new(),
            };
            if xi_poly.iter().all(|&c| c == 0.0) && xi_knots.is_empty() {
                return Err(err(line, "inner functional needs xi_poly or xi_knots"));
            }
            Some(FunctionalSpec::InnerProduct {
                xi: SpanElement::new(space, xi_poly, xi_knots)?,
            })
        }
        Some((other, line)) => {
            return Err(err(line, format!("unknown functional `{other}`")));
        }
    };

    let out_dir = get(map, "out_dir").map(|e| PathBuf::from(&e.value));

    let plan = StudyPlan {
        study,
        space,
        truth,
        design,
        noise,
        functional,
        n_grid,
        p_grid,
        lambda_scale,
        replicates,
        base_seed,
        quad_nodes,
        probes,
        gamma_control,
        spectral_replicates,
        out_dir,
    };
    plan.validate()?;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
# demo configuration
m = 2
base_seed = 77
n_grid = 20 40 80
p_grid = 0.25 0.5
truth_poly = 1.0 0.5
truth_knots = 0.35:1.0 0.8:0.5
noise = gaussian
sigma = 0.5

[converge]
functional = point
functional_point = 0.5
replicates = 12

[gamma]
probes = 2
gamma_control = true
";

    #[test]
    fn parses_sections_and_overrides() {
        let plan = parse_study_config(GOOD, StudyKind::Converge).unwrap();
        assert_eq!(plan.replicates, 12);
        assert_eq!(plan.n_grid, vec![20, 40, 80]);
        assert_eq!(plan.space.order(), 2);
        assert!(plan.functional.is_some());

        let plan = parse_study_config(GOOD, StudyKind::Gamma).unwrap();
        assert_eq!(plan.replicates, 100); // global default
        assert_eq!(plan.probes, 2);
        assert!(plan.gamma_control);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let text = "m = 2\nbase_seed = 1\nn_grid = 10 20\np_grid = 0.25\nwibble = 3\n";
        let e = parse_study_config(text, StudyKind::Blowup).unwrap_err();
        assert!(matches!(e, SplineError::Config { line: 5, .. }), "{e}");
    }

    #[test]
    fn unknown_section_is_an_error() {
        let text = "m = 2\n[jitter]\n";
        assert!(parse_study_config(text, StudyKind::Blowup).is_err());
    }

    #[test]
    fn duplicate_key_is_an_error() {
        let text = "m = 2\nm = 3\n";
        assert!(parse_study_config(text, StudyKind::Blowup).is_err());
    }

    #[test]
    fn missing_required_key_is_an_error() {
        let text = "m = 2\nbase_seed = 1\np_grid = 0.25\n";
        let e = parse_study_config(text, StudyKind::Blowup).unwrap_err();
        assert!(e.to_string().contains("n_grid"), "{e}");
    }

    #[test]
    fn piecewise_design_parses() {
        let text = "\
m = 1
base_seed = 5
n_grid = 10 20
p_grid = 0.25
design = piecewise
design_edges = 0.0 0.25 0.5
design_weights = 1.0 2.0
";
        let plan = parse_study_config(text, StudyKind::Blowup).unwrap();
        match plan.design {
            DesignDistribution::Piecewise { ref edges, .. } => {
                assert_eq!(edges, &vec![0.0, 0.25, 0.5])
            }
            _ => panic!("expected piecewise"),
        }
    }

    #[test]
    fn inner_functional_parses() {
        let text = "\
m = 1
base_seed = 5
n_grid = 10 20
p_grid = 0.25
functional = inner
xi_knots = 0.2:1.0 0.6:-1.0
";
        let plan = parse_study_config(text, StudyKind::Converge).unwrap();
        match plan.functional {
            Some(FunctionalSpec::InnerProduct { ref xi }) => {
                assert_eq!(xi.knots().len(), 2);
            }
            _ => panic!("expected inner functional"),
        }
    }
}
