//! `mmflow`: minimizing-movements experiments driven by JSON scenarios.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver failure,
//! 4 invariant violation or failed check.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mmflow_core::error::FlowError;

use mmflow_cli::commands::{self, Ctx};
use mmflow_cli::scenario::{instantiate, Scenario};

#[derive(Parser)]
#[command(name = "mmflow", version, about = "gradient flows by minimizing movements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the flow and write the trajectory.
    Run(Common),
    /// Run the flow and verify the requested identities and inequalities.
    Check(Common),
    /// Evolve a sampled bounded set and estimate the attractor.
    Attractor(Common),
    /// Fit the exponential energy-decay rate against the sharp one.
    Decay(Common),
    /// Refine seeds to rest points and report the stationary set.
    Restpoints(Common),
    /// Step-size refinement study of the scheme.
    Refine(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; overrides `output.directory` (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `flow.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress progress lines on stdout.
    #[arg(long)]
    quiet: bool,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Run(_) => "run",
            Command::Check(_) => "check",
            Command::Attractor(_) => "attractor",
            Command::Decay(_) => "decay",
            Command::Restpoints(_) => "restpoints",
            Command::Refine(_) => "refine",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Run(c)
            | Command::Check(c)
            | Command::Attractor(c)
            | Command::Decay(c)
            | Command::Restpoints(c)
            | Command::Refine(c) => c,
        }
    }
}

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

fn error_code(e: &FlowError) -> u8 {
    match e {
        FlowError::Domain(_) | FlowError::Input(_) => EXIT_CONFIG,
        FlowError::Solver { .. } => EXIT_SOLVER,
        FlowError::Invariant(_) => EXIT_INVARIANT,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = cli.command.common();

    let text = match std::fs::read_to_string(&common.scenario) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", common.scenario.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut sc: Scenario = match serde_json::from_str(&text) {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("error: invalid scenario {}: {e}", common.scenario.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(seed) = common.seed {
        sc.flow.seed = seed;
    }
    if sc.experiment.kind_name() != cli.command.name() {
        eprintln!(
            "error: subcommand `{}` does not match the scenario experiment `{}`",
            cli.command.name(),
            sc.experiment.kind_name()
        );
        return ExitCode::from(EXIT_CONFIG);
    }

    let instance = match instantiate(&sc) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(error_code(&e));
        }
    };

    let out_dir = common
        .out
        .clone()
        .or_else(|| sc.output.directory.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let formats = sc.output.formats.clone();
    let has = |f: &str| formats.as_ref().map_or(true, |v| v.iter().any(|x| x == f));
    let ctx = Ctx {
        scenario: sc,
        out_dir,
        write_csv: has("csv"),
        write_json: has("json"),
        quiet: common.quiet,
    };

    match commands::dispatch(&ctx, &instance) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_code(&e))
        }
    }
}
