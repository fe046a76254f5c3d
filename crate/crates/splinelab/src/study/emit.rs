//! Study output: CSV rows, a JSON mirror with the fitted slopes, and the
//! run manifest. All serialization is byte-stable for identical inputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Result, SplineError};
use crate::study::{StudyPlan, StudyResult};

pub const CSV_HEADER: &str = "study,m,p,n,replicates,statistic,mean,std_error,median";

pub fn csv_string(result: &StudyResult) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &result.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.study, r.m, r.p, r.n, r.replicates, r.statistic, r.mean, r.std_error, r.median
        )
        .expect("string write");
    }
    out
}

#[derive(Serialize)]
struct JsonDoc<'a> {
    rows: &'a [crate::study::StatRow],
    slopes: &'a [crate::study::SlopeRow],
    best_p: Option<f64>,
}

pub fn json_string(result: &StudyResult) -> String {
    let doc = JsonDoc {
        rows: &result.rows,
        slopes: &result.slopes,
        best_p: result.best_p,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("study result serializes");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    plan: &'a StudyPlan,
}

pub fn manifest_string(plan: &StudyPlan, version: &str) -> String {
    let mut s = serde_json::to_string_pretty(&Manifest { version, plan }).expect("plan serializes");
    s.push('\n');
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| SplineError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
    }
    fs::write(path, text).map_err(|source| SplineError::Io {
        path: path.to_path_buf(),
        source,
    })
}
