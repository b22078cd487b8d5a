use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clusterbound_cli::config::RunConfig;
use clusterbound_cli::runner::{self, RunError};
use clusterbound_cli::suites::{run_suite, SUITES};

#[derive(Parser)]
#[command(name = "clusterbound", version, about = "Boundary states of measured 2D cluster states")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for trajectory-level parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its artifacts.
    Run,
    /// Sweep sizes and mixes (stabilizer) or angles (mps, circuit).
    Sweep,
    /// Run a verification suite and print its JSON report.
    Verify {
        /// One of oracle-equivalence, povm, ising-ratio, stabilizer-limits, percolation-smoke.
        suite: String,
    },
    /// Finite-size collapse of a scaling CSV.
    Collapse {
        /// Scaling CSV written by `sweep`.
        input: PathBuf,
        #[arg(long, default_value = "I_AB")]
        observable: String,
        /// Tuning column: p_x, p_y or p_z.
        #[arg(long, default_value = "p_x")]
        parameter: String,
        /// Critical-point search range `lo,hi`; defaults to the data span.
        #[arg(long, value_parser = parse_range)]
        p_range: Option<(f64, f64)>,
        #[arg(long, value_parser = parse_range, default_value = "0.3,3.0")]
        nu_range: (f64, f64),
    },
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let hi = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((lo, hi))
}

fn load(g: &Global) -> Result<RunConfig, RunError> {
    let path = g.config.as_ref().ok_or_else(|| RunError::Config(config_err("--config is required")))?;
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(config_err(&format!("{}: {e}", path.display()))))?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn config_err(msg: &str) -> clusterbound_cli::config::ConfigError {
    clusterbound_cli::config::ConfigError(msg.into())
}

fn execute(cli: &Cli) -> Result<bool, RunError> {
    let g = &cli.global;
    match &cli.command {
        Command::Run | Command::Sweep => {
            let cfg = load(g)?;
            let written = match cli.command {
                Command::Run => runner::run(&cfg, g.out.as_deref())?,
                _ => runner::sweep(&cfg, g.out.as_deref())?,
            };
            for p in written {
                println!("{}", p.display());
            }
            Ok(true)
        }
        Command::Verify { suite } => {
            let report = run_suite(suite, g.seed.unwrap_or(0)).ok_or_else(|| {
                RunError::Config(config_err(&format!("unknown suite {suite}; expected one of {}", SUITES.join(", "))))
            })?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            if let Some(dir) = &g.out {
                std::fs::create_dir_all(dir).map_err(|e| RunError::Runtime(e.to_string()))?;
                std::fs::write(dir.join(format!("verify-{suite}.json")), &json)
                    .map_err(|e| RunError::Runtime(e.to_string()))?;
            }
            println!("{json}");
            Ok(report.passed)
        }
        Command::Collapse { input, observable, parameter, p_range, nu_range } => {
            let report = runner::collapse_csv(input, observable, parameter, *p_range, *nu_range)?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            if let Some(dir) = &g.out {
                std::fs::create_dir_all(dir).map_err(|e| RunError::Runtime(e.to_string()))?;
                let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("scaling");
                std::fs::write(dir.join(format!("{stem}-collapse-{observable}.json")), &json)
                    .map_err(|e| RunError::Runtime(e.to_string()))?;
            }
            println!("{json}");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
