use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser};

use oecsim::runner::{override_seed, run_matrix};
use oecsim::{load_matrix, load_scenario, reproduce_paper, ConfigError, MatrixReport};

const EXIT_RUN_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

/// Simulates an RSU beaconing identifications to a passing vehicle over BLE5 or Wize.
#[derive(Parser, Debug)]
#[command(name = "oecsim", version, about)]
#[command(group(ArgGroup::new("mode").required(true).args(["scenario", "matrix", "reproduce_paper"])))]
struct Cli {
    /// Run one scenario file.
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,
    /// Run every cell of a matrix file.
    #[arg(long, value_name = "PATH")]
    matrix: Option<PathBuf>,
    /// Run the shipped field-test matrix and compare with the published figures.
    #[arg(long)]
    reproduce_paper: bool,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Base seed, overriding the files.
    #[arg(long)]
    seed: Option<u64>,
    /// Runs executed at the same time.
    #[arg(long, value_name = "N", default_value_t = 1)]
    parallel: usize,
}

fn finish(run: &MatrixReport) -> ExitCode {
    eprintln!("wrote {}", run.files.summary.display());
    let mut failed = false;
    for (id, rep, err) in run.failures() {
        eprintln!("run {id} repetition {rep} failed: {err}");
        failed = true;
    }
    if failed {
        ExitCode::from(EXIT_RUN_FAILURE)
    } else {
        ExitCode::SUCCESS
    }
}

fn config_error(e: ConfigError) -> ExitCode {
    eprintln!("config error: {e}");
    ExitCode::from(EXIT_CONFIG)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let parallel = cli.parallel.max(1);

    if cli.reproduce_paper {
        return match reproduce_paper(cli.seed, parallel, &cli.out) {
            Ok((report, run)) => {
                print!("{}", report.render());
                finish(&run)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_RUN_FAILURE)
            }
        };
    }

    let loaded = match (&cli.scenario, &cli.matrix) {
        (Some(path), _) => load_scenario(path).map(|s| vec![s]),
        (_, Some(path)) => load_matrix(path),
        _ => unreachable!("clap enforces one mode"),
    };
    let mut scenarios = match loaded {
        Ok(s) => s,
        Err(e) => return config_error(e),
    };
    if let Some(seed) = cli.seed {
        override_seed(&mut scenarios, seed);
    }
    match run_matrix(&scenarios, parallel, &cli.out) {
        Ok(run) => finish(&run),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUN_FAILURE)
        }
    }
}
