use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cutwave::config::{Config, ConfigError, Experiment};
use cutwave::experiments;
use cutwave::output::{self, RESULT_HEADER, SPECTRUM_HEADER};
use cutwave::selftest;

const EXIT_CONFIG: u8 = 1;
const EXIT_FAILED_CELL: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "cutwave", version, about = "Immersed spectral element wave experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// `ceil(T / (0.5 dt_crit))` steps per cell instead of `n_steps`.
    #[arg(long)]
    fast: bool,
    /// Write the final field of every integrated cell.
    #[arg(long)]
    dump_field: bool,
    /// `key=value` overrides applied after the file.
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Discrete vs. analytic spectrum of the rod.
    RodSpectrum(RunArgs),
    /// h-convergence of the rod pulse.
    RodConvergence(RunArgs),
    /// Critical step and error over the cut fraction of the last element.
    RodCutsweep(RunArgs),
    /// h-convergence and critical step of the immersed arc.
    ArcConvergence(RunArgs),
    /// Quick numerical sanity checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn configure(experiment: Experiment, args: &RunArgs) -> Result<Config, ConfigError> {
    let mut cfg = Config::new(experiment);
    if let Some(path) = &args.config {
        cfg.load_file(path)?;
    }
    cfg.apply_overrides(&args.overrides)?;
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    cfg.fast |= args.fast;
    cfg.dump_field |= args.dump_field;
    cfg.validate()?;
    Ok(cfg)
}

fn run_experiment(cfg: &Config) -> std::io::Result<bool> {
    std::fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join(cfg.experiment.file_name());
    let ok = if cfg.experiment == Experiment::RodSpectrum {
        let (rows, failures) = experiments::rod_spectrum(cfg);
        for f in &failures {
            log::error!("{f}");
        }
        output::write_csv(&path, SPECTRUM_HEADER, rows.iter().map(|r| r.to_csv()))?;
        failures.is_empty()
    } else {
        let cells = experiments::run_cells(cfg);
        let field_dir = cfg.out.join("fields");
        for (i, (row, dump)) in cells.iter().enumerate() {
            if let Some(dump) = dump {
                std::fs::create_dir_all(&field_dir)?;
                let name = format!("{}_{}_{}_p{}_n{}_{i:04}.csv", cfg.experiment.as_str(), row.bc.as_str(), row.stabilization, row.p, row.n_el);
                output::write_field(&field_dir.join(name), dump)?;
            }
        }
        output::write_csv(&path, RESULT_HEADER, cells.iter().map(|(r, _)| r.to_csv()))?;
        cells.iter().all(|(r, _)| !r.status.is_failure())
    };
    println!("wrote {}", path.display());
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (experiment, args) = match &cli.command {
        Command::RodSpectrum(a) => (Experiment::RodSpectrum, a),
        Command::RodConvergence(a) => (Experiment::RodConvergence, a),
        Command::RodCutsweep(a) => (Experiment::RodCutSweep, a),
        Command::ArcConvergence(a) => (Experiment::ArcConvergence, a),
        Command::Selftest { seed } => {
            let checks = selftest::run_all(*seed);
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            return if checks.iter().all(|c| c.passed) { ExitCode::SUCCESS } else { ExitCode::from(EXIT_FAILED_CELL) };
        }
    };
    let cfg = match configure(experiment, args) {
        Ok(c) => c,
        Err(e) => {
            for msg in &e.0 {
                eprintln!("config error: {msg}");
            }
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run_experiment(&cfg) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILED_CELL),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILED_CELL)
        }
    }
}
