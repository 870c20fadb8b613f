use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ltc_cli::{commands, CliError};

/// Dithered lattice transform codes: RDP sweeps, bounds, baselines, and
/// diagnostics. Set RAYON_NUM_THREADS to override the worker count.
#[derive(Parser)]
#[command(name = "ltc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the codecs described by a TOML config file; writes CSV + JSON sidecar.
    Eval {
        /// Path to the run configuration (TOML).
        config: PathBuf,
    },
    /// Closed-form Gaussian RDP bound table.
    Bounds {
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
        /// Distortion grid start:stop:count (inclusive).
        #[arg(long, default_value = "0.1:2.0:20")]
        d_grid: String,
        /// Comma-separated perception levels; `inf` for unconstrained.
        #[arg(long, default_value = "0")]
        p: String,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reverse-channel-coding baseline on the Gaussian RDP-optimal channel.
    Rcc {
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
        #[arg(long)]
        d: f64,
        #[arg(long, default_value_t = 0.0)]
        p: f64,
        /// Source dimension (1 = scalar, n = i.i.d. block).
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 10_000)]
        codebook: usize,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Monte-Carlo NSM of a named lattice.
    Nsm {
        #[arg(long)]
        family: String,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Shared-dither construction parameters for (σ², D, P).
    ConstructSd {
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
        #[arg(long)]
        d: f64,
        #[arg(long, default_value_t = 0.0)]
        p: f64,
    },
    /// Private-dither construction parameters for (σ², D).
    ConstructPd {
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
        #[arg(long)]
        d: f64,
    },
    /// Lattice-Gaussian sampler diagnostics.
    DiagLatticeGaussian {
        #[arg(long)]
        family: String,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Flatness-factor diagnostics over a gamma list.
    DiagFlatness {
        #[arg(long)]
        family: String,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Comma-separated gamma values.
        #[arg(long, default_value = "0.2,0.4,0.8")]
        gammas: String,
        #[arg(long, default_value_t = 100)]
        probes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the verification suites at reduced budgets.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Further reduce budgets (for smoke testing).
        #[arg(long, default_value_t = false)]
        quick: bool,
    },
}

fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Config(format!(
            "grid '{s}' is not start:stop:count"
        )));
    }
    let start: f64 = parts[0]
        .parse()
        .map_err(|_| CliError::Config("bad grid start".into()))?;
    let stop: f64 = parts[1]
        .parse()
        .map_err(|_| CliError::Config("bad grid stop".into()))?;
    let count: usize = parts[2]
        .parse()
        .map_err(|_| CliError::Config("bad grid count".into()))?;
    if count < 1 {
        return Err(CliError::Config("grid count must be >= 1".into()));
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let step = (stop - start) / (count - 1) as f64;
    Ok((0..count).map(|i| start + step * i as f64).collect())
}

fn parse_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|tok| {
            let t = tok.trim();
            if t.eq_ignore_ascii_case("inf") {
                Ok(f64::INFINITY)
            } else {
                t.parse::<f64>()
                    .map_err(|_| CliError::Config(format!("bad list entry '{t}'")))
            }
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Eval { config } => {
            let report = commands::cmd_eval(&config)?;
            println!(
                "wrote {} rows to {} (sidecar {})",
                report.rows.len() - 1,
                report.csv_path.display(),
                report.sidecar_path.display()
            );
        }
        Command::Bounds {
            sigma2,
            d_grid,
            p,
            out,
        } => {
            let table = commands::cmd_bounds(sigma2, &parse_grid(&d_grid)?, &parse_list(&p)?)?;
            match out {
                Some(path) => std::fs::write(path, table)?,
                None => print!("{table}"),
            }
        }
        Command::Rcc {
            sigma2,
            d,
            p,
            dim,
            codebook,
            trials,
            seed,
        } => {
            print!(
                "{}",
                commands::cmd_rcc(sigma2, d, p, dim, codebook, trials, seed)?
            );
        }
        Command::Nsm {
            family,
            dim,
            scale,
            samples,
            seed,
        } => {
            print!("{}", commands::cmd_nsm(&family, dim, scale, samples, seed)?);
        }
        Command::ConstructSd { sigma2, d, p } => {
            print!("{}", commands::cmd_construct_sd(sigma2, d, p)?);
        }
        Command::ConstructPd { sigma2, d } => {
            print!("{}", commands::cmd_construct_pd(sigma2, d)?);
        }
        Command::DiagLatticeGaussian {
            family,
            dim,
            scale,
            sigma2,
            samples,
            seed,
        } => {
            print!(
                "{}",
                commands::cmd_diag_lattice_gaussian(&family, dim, scale, sigma2, samples, seed)?
            );
        }
        Command::DiagFlatness {
            family,
            dim,
            scale,
            gammas,
            probes,
            seed,
        } => {
            print!(
                "{}",
                commands::cmd_diag_flatness(
                    &family,
                    dim,
                    scale,
                    &parse_list(&gammas)?,
                    probes,
                    seed
                )?
            );
        }
        Command::Selftest { seed, quick } => {
            print!("{}", commands::cmd_selftest(seed, quick)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests exit cleanly; argument mistakes are
            // configuration errors
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
