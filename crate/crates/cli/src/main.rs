use std::path::PathBuf;
use std::process::ExitCode;

use censorlab::commands::mc::McOverrides;
use censorlab::config::ExperimentConfig;
use censorlab::{exit_code_for_error, run, Command, RunOptions};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "censorlab", version, about = "Censoring and mixing experiments for monotone spin systems")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Existing directory receiving the report files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall-clock time in reports (breaks byte-identical reruns).
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Cmd {
    VerifyCensoring(Common),
    CompareSchedules(Common),
    Contraction(Common),
    Hanging(Common),
    Mc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        beta: Option<f64>,
        /// random | systematic | alternating
        #[arg(long)]
        schedule: Option<String>,
        /// Number of replicas.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        max_steps: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common, mut mc, schedule) = match cli.command {
        Cmd::VerifyCensoring(c) => (Command::VerifyCensoring, c, McOverrides::default(), None),
        Cmd::CompareSchedules(c) => (Command::CompareSchedules, c, McOverrides::default(), None),
        Cmd::Contraction(c) => (Command::Contraction, c, McOverrides::default(), None),
        Cmd::Hanging(c) => (Command::Hanging, c, McOverrides::default(), None),
        Cmd::Mc { common, size, beta, schedule, seeds, max_steps } => {
            (Command::Mc, common, McOverrides { size, beta, order: None, seeds, max_steps }, schedule)
        }
    };
    let result = (|| {
        if let Some(name) = schedule {
            mc.order = Some(McOverrides::parse_order(&name)?);
        }
        let cfg = ExperimentConfig::load(&common.config)?;
        let opts = RunOptions { seed: common.seed, out: common.out, timing: common.timing, mc };
        run(command, cfg, &opts)
    })();
    match result {
        Ok(outcome) => {
            for c in &outcome.claims {
                println!("{:?}\t{}", c.verdict, c.claim);
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for_error(&e) as u8)
        }
    }
}
