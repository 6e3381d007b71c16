//! Report records and output files.

use std::path::Path;

use censorlab_core::Result;
use serde::Serialize;
use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimVerdict {
    Certified,
    Violated,
    Skipped,
}

/// One certification outcome.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClaimReport {
    pub claim: String,
    pub verdict: ClaimVerdict,
    /// First counterexample, or `null`.
    pub witness: Value,
    pub tolerance: f64,
    pub seed: Option<u64>,
    /// Seconds; only filled in when timing is requested so reruns stay
    /// byte-identical.
    pub wall_time: Option<f64>,
    pub details: Value,
}

impl ClaimReport {
    pub fn new(claim: impl Into<String>, ok: bool, tolerance: f64) -> Self {
        Self {
            claim: claim.into(),
            verdict: if ok { ClaimVerdict::Certified } else { ClaimVerdict::Violated },
            witness: Value::Null,
            tolerance,
            seed: None,
            wall_time: None,
            details: Value::Null,
        }
    }

    pub fn skipped(claim: impl Into<String>, reason: &str) -> Self {
        Self { verdict: ClaimVerdict::Skipped, details: Value::String(reason.into()), ..Self::new(claim, true, 0.0) }
    }

    pub fn with_witness(mut self, w: impl Serialize) -> Self {
        self.witness = serde_json::to_value(w).expect("witness serializes");
        self
    }

    pub fn with_details(mut self, d: impl Serialize) -> Self {
        self.details = serde_json::to_value(d).expect("details serialize");
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn ok(&self) -> bool {
        self.verdict != ClaimVerdict::Violated
    }
}

/// A named output file held in memory until written.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

impl OutputFile {
    pub fn json(name: &str, value: &impl Serialize) -> Self {
        let mut contents = serde_json::to_string_pretty(value).expect("report serializes");
        contents.push('\n');
        Self { name: name.into(), contents }
    }

    pub fn text(name: &str, contents: String) -> Self {
        Self { name: name.into(), contents }
    }
}

/// Writes every file into `dir`, which must already exist.
pub fn write_outputs(dir: &Path, files: &[OutputFile]) -> Result<()> {
    if !dir.is_dir() {
        return Err(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("output directory {} does not exist", dir.display()),
        )
        .into());
    }
    for f in files {
        std::fs::write(dir.join(&f.name), &f.contents)?;
    }
    Ok(())
}

/// `step,tv,schedule_id` rows.
pub fn curve_csv(curves: &[(&str, &[(usize, f64)])]) -> String {
    let mut out = String::from("step,tv,schedule_id\n");
    for (id, curve) in curves {
        for (step, tv) in curve.iter() {
            out.push_str(&format!("{step},{tv},{id}\n"));
        }
    }
    out
}
