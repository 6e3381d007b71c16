//! Experiment drivers behind the `censorlab` binary.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;
use std::time::Instant;

use censorlab_core::{Error, Result};

use crate::config::ExperimentConfig;
use crate::report::{ClaimReport, OutputFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    VerifyCensoring,
    CompareSchedules,
    Contraction,
    Hanging,
    Mc,
}

/// Claims checked by a command and the files it wants written.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub claims: Vec<ClaimReport>,
    pub files: Vec<OutputFile>,
}

impl Outcome {
    pub fn ok(&self) -> bool {
        self.claims.iter().all(ClaimReport::ok)
    }

    pub fn exit_code(&self) -> i32 {
        if self.ok() {
            EXIT_OK
        } else {
            EXIT_VIOLATION
        }
    }
}

/// Command-line overrides layered over the config.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub timing: bool,
    pub mc: commands::mc::McOverrides,
}

pub fn exit_code_for_error(err: &Error) -> i32 {
    match err {
        Error::Budget { .. } => EXIT_BUDGET,
        _ => EXIT_CONFIG,
    }
}

/// Runs one command and writes its files to the output directory (the
/// `--out` flag, else the config's `output`, else nothing is written).
pub fn run(command: Command, mut cfg: ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    let out = opts.out.clone().or_else(|| cfg.output.clone());
    if let Some(dir) = &out {
        if !dir.is_dir() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("output directory {} does not exist", dir.display()),
            )
            .into());
        }
    }
    let started = Instant::now();
    let mut outcome = match command {
        Command::VerifyCensoring => commands::censoring::run(&cfg)?,
        Command::CompareSchedules => commands::compare::run(&cfg)?,
        Command::Contraction => commands::contraction::run(&cfg)?,
        Command::Hanging => commands::hanging::run(&cfg)?,
        Command::Mc => commands::mc::run(&cfg, &opts.mc)?,
    };
    if opts.timing {
        let secs = started.elapsed().as_secs_f64();
        for c in &mut outcome.claims {
            c.wall_time = Some(secs);
        }
    }
    outcome.files.push(OutputFile::json("claims.json", &outcome.claims));
    if let Some(dir) = &out {
        report::write_outputs(dir, &outcome.files)?;
    }
    Ok(outcome)
}
