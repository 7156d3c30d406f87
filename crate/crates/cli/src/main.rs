use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sd_lab_cli::{commands, resolve, write_outcome, CliError};

/// Self-distillation experiments: ridge curves, logistic fixed points,
/// kernel tables and softmax probing.
///
/// Parameters are `--key value` pairs after the subcommand, optionally on
/// top of a `key = value` config file. Run with --print-config to see every
/// key and its default.
#[derive(Parser)]
#[command(name = "sd-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// e_reg, e_sd, ξ* and e_sd′ over a λ grid, one file per γ.
    RidgeSweep(RunArgs),
    /// Teacher and student accuracy over p for each r.
    LogitFigure1(RunArgs),
    /// Group-averaged kernel predictions next to the reduced solution.
    GramTable(RunArgs),
    /// Teacher and one student at a single ξ.
    ProbeRun(RunArgs),
    /// Teacher and one student per ξ in a grid.
    ProbeSweep(RunArgs),
    /// Print the optimal imitation parameter.
    XiStar(RunArgs),
    /// Print min over λ of e_reg and of e_sd.
    LambdaCompare(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` file; command-line pairs override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
    /// Parameter overrides as `--key value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    params: Vec<String>,
}

impl Command {
    fn split(&self) -> (&'static str, &RunArgs) {
        match self {
            Command::RidgeSweep(a) => ("ridge-sweep", a),
            Command::LogitFigure1(a) => ("logit-figure1", a),
            Command::GramTable(a) => ("gram-table", a),
            Command::ProbeRun(a) => ("probe-run", a),
            Command::ProbeSweep(a) => ("probe-sweep", a),
            Command::XiStar(a) => ("xi-star", a),
            Command::LambdaCompare(a) => ("lambda-compare", a),
        }
    }
}

fn threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("SD_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Invalid(format!("SD_LAB_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Invalid(e.to_string()))
}

fn run(cli: Cli) -> Result<i32, CliError> {
    threads()?;
    let (name, args) = cli.command.split();
    // The flag can also land among the trailing pairs.
    let print = args.params.iter().any(|a| a == "--print-config");
    let params: Vec<String> = args.params.iter().filter(|a| *a != "--print-config").cloned().collect();
    let cfg = resolve(name, args.config.as_deref(), &params)?;
    if args.print_config || print {
        print!("{cfg}");
        return Ok(0);
    }
    let outcome = commands::run(&cfg)?;
    write_outcome(&outcome)?;
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
