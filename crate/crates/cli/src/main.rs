use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use opsys_cli::commands::{cmd_campaign, cmd_check_path, cmd_examples, CheckError, DEFAULT_TOL};
use opsys_cli::report::RunReport;
use opsys_core::riesz::{CampaignConfig, PairFamily};

const INPUT_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "opsys", version, about = "Decision procedures for finite-dimensional operator systems")]
struct Cli {
    /// Solver tolerance
    #[arg(long, global = true, env = "OPSYS_TOL", default_value_t = DEFAULT_TOL)]
    tol: f64,

    /// Write <STEM>.json and <STEM>.txt instead of printing the text report
    #[arg(long, global = true, value_name = "STEM")]
    out: Option<PathBuf>,

    /// Print the JSON report to stdout
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reproduce the classic interpolation and extension counterexamples
    Examples {
        /// Replace V by l∞4, which should flip the interpolation verdict
        #[arg(long)]
        loosen_v: bool,
    },
    /// Decide every problem in an instance file
    Check { file: PathBuf },
    /// Run a seeded campaign over random inclusions
    Campaign {
        #[arg(long, default_value = "diagonal-in-full")]
        family: PairFamily,
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        level: usize,
        /// Lower and upper list lengths, as n,k
        #[arg(long, default_value = "2,2", value_parser = parse_nk)]
        nk: (usize, usize),
        /// Largest ambient dimension
        #[arg(long, default_value_t = 6)]
        cap: usize,
        /// Skip the extension checks
        #[arg(long)]
        no_extensions: bool,
    },
}

fn parse_nk(s: &str) -> Result<(usize, usize), String> {
    let (n, k) = s.split_once(',').ok_or("expected n,k")?;
    let parse = |x: &str| x.trim().parse::<usize>().map_err(|e| e.to_string());
    Ok((parse(n)?, parse(k)?))
}

fn emit(cli: &Cli, report: &RunReport) -> ExitCode {
    if let Some(stem) = &cli.out {
        if let Err(e) = report.write(stem) {
            eprintln!("error: cannot write report: {e}");
            return ExitCode::from(INPUT_ERROR);
        }
    }
    if cli.json {
        print!("{}", report.to_json());
    } else if cli.out.is_none() {
        print!("{}", report.to_text());
    }
    ExitCode::from(report.outcome.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if !(cli.tol > 0.0) {
        eprintln!("error: tolerance must be positive");
        return ExitCode::from(INPUT_ERROR);
    }
    let result = match &cli.command {
        Command::Examples { loosen_v } => cmd_examples(cli.tol, *loosen_v).map_err(|e| e.to_string()),
        Command::Check { file } => match cmd_check_path(file, cli.tol) {
            Ok(r) => Ok(r),
            Err(CheckError::Input(e)) => {
                eprintln!("error: {e}");
                return ExitCode::from(INPUT_ERROR);
            }
            Err(e) => Err(e.to_string()),
        },
        Command::Campaign { family, count, seed, level, nk, cap, no_extensions } => {
            let cfg = CampaignConfig {
                count: *count,
                dimension_cap: *cap,
                family: *family,
                seed: *seed,
                level: *level,
                nk: *nk,
                check_riesz_arveson: !no_extensions,
                tol: cli.tol,
            };
            if let Err(e) = cfg.validate() {
                eprintln!("error: {e}");
                return ExitCode::from(INPUT_ERROR);
            }
            cmd_campaign(&cfg).map_err(|e| e.to_string())
        }
    };
    match result {
        Ok(report) => emit(&cli, &report),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(INPUT_ERROR)
        }
    }
}
