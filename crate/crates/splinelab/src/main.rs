use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use splinelab::error::{Result, SplineError};
use splinelab::model::Dataset;
use splinelab::rkhs::{KernelPart, KernelSpace, SpanElement};
use splinelab::solver;
use splinelab::spectral;
use splinelab::study::{self, config::parse_study_config, emit, StudyKind};

#[derive(Parser)]
#[command(
    name = "splinelab",
    version,
    about = "Smoothing-spline fits, spectral diagnostics and regularization-scaling studies on [0, 1]"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch study described by a config file.
    Study {
        /// One of: converge, blowup, rate, gamma.
        kind: String,
        /// Path to the study configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides out_dir from the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker thread count (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Fit a spline to a two-column CSV (t,y) and export the curve.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// Derivative order of the penalty.
        #[arg(long)]
        m: usize,
        #[arg(long)]
        lambda: f64,
        /// Number of evaluation points for the exported curve.
        #[arg(long, default_value_t = 201)]
        grid_points: usize,
        /// Where to write the evaluation grid CSV (t,mu_hat).
        #[arg(long, default_value = "fit_grid.csv")]
        out_grid: PathBuf,
        /// Where to write the fitted coefficients CSV.
        #[arg(long, default_value = "fit_coefficients.csv")]
        out_coef: PathBuf,
    },
    /// Print a kernel evaluation table as CSV (columns s,t,value).
    Kernel {
        #[arg(long)]
        m: usize,
        /// Which block: k, k0 or k1.
        #[arg(long, default_value = "k")]
        which: String,
        /// Grid resolution per axis.
        #[arg(long, default_value_t = 51)]
        grid: usize,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// JSON spectral report for the design read from a t,y CSV.
    Spectral {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        lambda: f64,
        /// Eigenvalue cutoff for the reciprocal sum (default 1e-12 * max).
        #[arg(long)]
        cutoff: Option<f64>,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Study {
            kind,
            config,
            out,
            workers,
        } => run_study_cmd(&kind, &config, out, workers),
        Command::Fit {
            data,
            m,
            lambda,
            grid_points,
            out_grid,
            out_coef,
        } => run_fit_cmd(&data, m, lambda, grid_points, &out_grid, &out_coef),
        Command::Kernel {
            m,
            which,
            grid,
            out,
        } => run_kernel_cmd(m, &which, grid, out.as_deref()),
        Command::Spectral {
            data,
            m,
            lambda,
            cutoff,
            out,
        } => run_spectral_cmd(&data, m, lambda, cutoff, out.as_deref()),
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| SplineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parse a two-column CSV of (t, y); a non-numeric first line is treated as
/// a header.
fn read_dataset_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = read_to_string(path)?;
    let mut design = Vec::new();
    let mut responses = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (a, b) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
        match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
            (Ok(t), Ok(y)) => {
                if !(0.0..=1.0).contains(&t) {
                    return Err(SplineError::InvalidParameter(format!(
                        "{}:{}: design point {t} outside [0, 1]",
                        path.display(),
                        idx + 1
                    )));
                }
                design.push(t);
                responses.push(y);
            }
            _ if idx == 0 => continue, // header
            _ => {
                return Err(SplineError::InvalidParameter(format!(
                    "{}:{}: cannot parse `{line}` as t,y",
                    path.display(),
                    idx + 1
                )));
            }
        }
    }
    if design.is_empty() {
        return Err(SplineError::EmptyPoints);
    }
    Ok((design, responses))
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => emit::write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_study_cmd(
    kind: &str,
    config: &Path,
    out: Option<PathBuf>,
    workers: Option<usize>,
) -> Result<()> {
    let kind = StudyKind::parse(kind).ok_or_else(|| {
        SplineError::InvalidParameter(format!(
            "unknown study `{kind}`; expected converge, blowup, rate or gamma"
        ))
    })?;
    let text = read_to_string(config)?;
    let mut plan = parse_study_config(&text, kind)?;
    if let Some(dir) = out {
        plan.out_dir = Some(dir);
    }
    let out_dir = plan.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));

    let result = match workers {
        Some(k) => {
            if k == 0 {
                return Err(SplineError::InvalidParameter(
                    "workers must be at least 1".into(),
                ));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| SplineError::InvalidParameter(format!("thread pool: {e}")))?;
            pool.install(|| study::run_study(&plan))?
        }
        None => study::run_study(&plan)?,
    };

    let base = out_dir.join(format!("{}_results.csv", plan.study.name()));
    emit::write_text(&base, &emit::csv_string(&result))?;
    let json_path = out_dir.join(format!("{}_results.json", plan.study.name()));
    emit::write_text(&json_path, &emit::json_string(&result))?;
    let manifest_path = out_dir.join(format!("{}_manifest.json", plan.study.name()));
    emit::write_text(
        &manifest_path,
        &emit::manifest_string(&plan, env!("CARGO_PKG_VERSION")),
    )?;

    println!(
        "{}: {} rows, {} slopes -> {}",
        plan.study.name(),
        result.rows.len(),
        result.slopes.len(),
        out_dir.display()
    );
    for s in &result.slopes {
        println!(
            "  slope[p={}, {}] = {:+.4} (se {:.4}, {} points)",
            s.p, s.statistic, s.slope, s.std_error, s.points
        );
    }
    if let Some(bp) = result.best_p {
        println!("  best p at largest n: {bp}");
    }
    Ok(())
}

fn run_fit_cmd(
    data: &Path,
    m: usize,
    lambda: f64,
    grid_points: usize,
    out_grid: &Path,
    out_coef: &Path,
) -> Result<()> {
    if grid_points < 2 {
        return Err(SplineError::InvalidParameter(
            "grid_points must be at least 2".into(),
        ));
    }
    let space = KernelSpace::new(m)?;
    let (design, responses) = read_dataset_csv(data)?;
    let dataset = Dataset {
        design,
        responses,
        sigma: f64::NAN,
        seed: 0,
        truth: SpanElement::zero(space),
    };
    let fit = solver::fit(space, &dataset, lambda)?;

    let mut grid_csv = String::from("t,mu_hat\n");
    for i in 0..grid_points {
        let t = i as f64 / (grid_points - 1) as f64;
        grid_csv.push_str(&format!("{},{}\n", t, fit.evaluate(t)));
    }
    emit::write_text(out_grid, &grid_csv)?;

    let mut coef_csv = String::from("term,index,knot,value\n");
    for (j, dj) in fit.d.iter().enumerate() {
        coef_csv.push_str(&format!("d,{j},,{dj}\n"));
    }
    for (i, (t, ci)) in fit.knots().iter().zip(&fit.c).enumerate() {
        coef_csv.push_str(&format!("c,{i},{t},{ci}\n"));
    }
    emit::write_text(out_coef, &coef_csv)?;

    println!(
        "fit: n = {}, m = {m}, lambda = {lambda}, residual = {:.3e}, cond ~ {:.3e}{}{}",
        dataset.len(),
        fit.diagnostics.residual,
        fit.diagnostics.condition_estimate,
        if fit.diagnostics.ill_conditioned {
            " [ill-conditioned]"
        } else {
            ""
        },
        if fit.diagnostics.interpolating {
            " [interpolating]"
        } else {
            ""
        },
    );
    println!("  grid -> {}", out_grid.display());
    println!("  coefficients -> {}", out_coef.display());
    Ok(())
}

fn run_kernel_cmd(m: usize, which: &str, grid: usize, out: Option<&Path>) -> Result<()> {
    if grid < 2 {
        return Err(SplineError::InvalidParameter(
            "grid must be at least 2".into(),
        ));
    }
    let space = KernelSpace::new(m)?;
    let part = match which.to_ascii_lowercase().as_str() {
        "k" => KernelPart::K,
        "k0" => KernelPart::K0,
        "k1" => KernelPart::K1,
        other => {
            return Err(SplineError::InvalidParameter(format!(
                "unknown kernel part `{other}`; expected k, k0 or k1"
            )));
        }
    };
    let mut csv = String::from("s,t,value\n");
    for i in 0..grid {
        let s = i as f64 / (grid - 1) as f64;
        for j in 0..grid {
            let t = j as f64 / (grid - 1) as f64;
            let v = match part {
                KernelPart::K => space.kernel(s, t),
                KernelPart::K0 => space.k0(s, t),
                KernelPart::K1 => space.k1(s, t),
            };
            csv.push_str(&format!("{s},{t},{v}\n"));
        }
    }
    write_or_print(out, &csv)
}

fn run_spectral_cmd(
    data: &Path,
    m: usize,
    lambda: f64,
    cutoff: Option<f64>,
    out: Option<&Path>,
) -> Result<()> {
    let space = KernelSpace::new(m)?;
    let (design, _responses) = read_dataset_csv(data)?;
    let report = spectral::spectral_report(space, &design, lambda, cutoff)?;
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    write_or_print(out, &text)
}
