use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use timing_core::par::Parallelism;
use timing_core::scenario::{self, RunOptions, Scenario};
use timing_core::{Error, Span};

/// Discrete-event simulator for latency, age and deadline metrics.
#[derive(Parser, Debug)]
#[command(name = "timing-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// Scenario file, or the name of a built-in scenario.
    scenario: String,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the horizon, in seconds.
    #[arg(long)]
    horizon: Option<f64>,
    /// Directory for report files; reports go to stdout when unset.
    #[arg(long, env = "TIMING_SIM_OUTPUT")]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write the event log to trace.csv.
    #[arg(long)]
    trace: bool,
    /// Write the AoI sawtooth breakpoints to sawtooth.csv.
    #[arg(long)]
    sawtooth: bool,
    /// Print the scenario with all defaults filled in, then exit.
    #[arg(long)]
    effective_config: bool,
    /// Run everything on the calling thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario once.
    Run(RunArgs),
    /// Run a scenario over a range of seeds and merge the results.
    Sweep {
        #[command(flatten)]
        args: RunArgs,
        /// Seed range, `a..b` (end exclusive) or `a..=b`.
        #[arg(long)]
        seeds: String,
    },
    /// List the built-in scenarios.
    ListScenarios,
    /// Describe a scenario and print its effective configuration.
    Explain {
        scenario: String,
    },
}

const EXIT_PARSE: u8 = 3;
const EXIT_VALIDATION: u8 = 4;
const EXIT_RUNTIME: u8 = 5;
const EXIT_IO: u8 = 6;

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Parse { .. } => EXIT_PARSE,
        Error::Validation { .. } | Error::InvalidSplit(_) | Error::DuplicateSeeds(_) => EXIT_VALIDATION,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_RUNTIME,
    }
}

fn load(name: &str) -> Result<Scenario, Error> {
    let path = Path::new(name);
    if !path.exists() {
        if let Some(text) = scenario::builtin_source(name) {
            return scenario::parse_scenario(text);
        }
    }
    scenario::load_scenario(path)
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, Error> {
    let bad = || Error::validation("seeds", format!("expected a..b or a..=b, got '{s}'"));
    let (a, b, inclusive) = match s.split_once("..=") {
        Some((a, b)) => (a, b, true),
        None => {
            let (a, b) = s.split_once("..").ok_or_else(bad)?;
            (a, b, false)
        }
    };
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    let seeds: Vec<u64> = if inclusive { (a..=b).collect() } else { (a..b).collect() };
    if seeds.is_empty() {
        return Err(Error::validation("seeds", format!("range '{s}' is empty")));
    }
    Ok(seeds)
}

fn options(args: &RunArgs) -> Result<RunOptions, Error> {
    let horizon = match args.horizon {
        Some(h) if !h.is_finite() || h < 0.0 => {
            return Err(Error::validation("horizon", "must be a non-negative number of seconds"))
        }
        Some(h) => Some(Span::from_secs_f64(h)),
        None => None,
    };
    Ok(RunOptions {
        seed: args.seed,
        horizon,
        trace: args.trace,
        sawtooth: args.sawtooth,
        parallelism: if args.sequential { Parallelism::Sequential } else { Parallelism::Parallel },
    })
}

fn write(dir: &Path, file: &str, contents: &str) -> Result<(), Error> {
    let path = dir.join(file);
    fs::write(&path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn emit(args: &RunArgs, report: &str, extra: &[(&str, Option<String>)]) -> Result<(), Error> {
    let name = match args.format {
        Format::Csv => "report.csv",
        Format::Json => "report.json",
    };
    match &args.output {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
            write(dir, name, report)?;
            for (file, body) in extra {
                if let Some(body) = body {
                    write(dir, file, body)?;
                }
            }
            eprintln!("wrote {}", dir.join(name).display());
        }
        None => print!("{report}"),
    }
    Ok(())
}

fn run_cmd(args: &RunArgs) -> Result<(), Error> {
    let sc = load(&args.scenario)?;
    if args.effective_config {
        print!("{}", sc.effective_config());
        return Ok(());
    }
    let report = scenario::run(&sc, &options(args)?)?;
    let body = match args.format {
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json(),
    };
    let trace = args.trace.then(|| report.trace_csv());
    let sawtooth = if args.sawtooth { report.sawtooth_csv() } else { None };
    emit(args, &body, &[("trace.csv", trace), ("sawtooth.csv", sawtooth)])?;
    eprintln!("{} seed {} finished in {:.3} s", report.scenario, report.seed, report.runtime.as_secs_f64());
    Ok(())
}

fn sweep_cmd(args: &RunArgs, seeds: &str) -> Result<(), Error> {
    let sc = load(&args.scenario)?;
    if args.effective_config {
        print!("{}", sc.effective_config());
        return Ok(());
    }
    let seeds = parse_seeds(seeds)?;
    let report = scenario::sweep(&sc, &seeds, &options(args)?)?;
    let body = match args.format {
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json(),
    };
    let per_seed = (args.format == Format::Csv).then(|| report.per_seed_csv());
    emit(args, &body, &[("per_seed.csv", per_seed)])
}

fn list() {
    for sc in scenario::builtins() {
        println!("{:<28} {:<20} {}", sc.name, sc.taxonomy, sc.description);
    }
}

fn explain(name: &str) -> Result<(), Error> {
    let sc = load(name)?;
    let kind = sc.experiment()?.kind();
    println!("# {}", sc.name);
    if !sc.description.is_empty() {
        println!("# {}", sc.description);
    }
    println!("# experiment: {kind}");
    if !sc.taxonomy.is_empty() {
        println!("# taxonomy: {}", sc.taxonomy);
    }
    println!();
    print!("{}", sc.effective_config());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run_cmd(args),
        Command::Sweep { args, seeds } => sweep_cmd(args, seeds),
        Command::ListScenarios => {
            list();
            Ok(())
        }
        Command::Explain { scenario } => explain(scenario),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seeds("1..4").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds("1..=3").unwrap(), vec![1, 2, 3]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("x..3").is_err());
    }

    #[test]
    fn exit_codes_are_distinct() {
        let parse = Error::Parse { line: 1, column: 1, message: String::new() };
        let validation = Error::validation("f", "r");
        let runtime = Error::NoParticipants { round: 1 };
        let codes = [exit_code(&parse), exit_code(&validation), exit_code(&runtime), exit_code(&Error::Io("x".into()))];
        assert_eq!(codes, [3, 4, 5, 6]);
        assert_eq!(exit_code(&validation.context("scenario")), 4);
    }
}
