use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{error, warn};

use swirl_rings::cli::{self, config::RunConfig};
use swirl_rings::kernel::KernelBackend;
use swirl_rings::Error;

#[derive(Parser)]
#[command(name = "swirl-rings", version, about = "Steady vortex rings with swirl")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration; writes field dumps and a diagnostics record.
    Solve {
        #[arg(short = 'c', long = "config")]
        config: PathBuf,
    },
    /// Solve for several β and fit μ and E against log(1/β).
    Sweep {
        #[arg(short = 'c', long = "config")]
        config: PathBuf,
        /// Comma-separated list; overrides `params.betas`.
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
    },
    /// Sample the ring kernel on random point pairs and write a CSV.
    KernelCheck {
        #[arg(short = 'n', long = "samples", default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Backend::Quadrature)]
        backend: Backend,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        precision: usize,
    },
    /// Run the property suite; exits 4 on any failure.
    Validate,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Quadrature,
    Elliptic,
}

fn load(path: &Path) -> Result<RunConfig, Error> {
    cli::load_config(path)
}

fn run(args: Args) -> Result<ExitCode, Error> {
    match args.command {
        Command::Solve { config } => {
            let cfg = load(&config)?;
            let root = cli::output_root(&cfg.output.directory);
            let out = cli::solve(&cfg, &root)?;
            print!("{}", out.record.to_text(cfg.output.precision));
            if !out.run.solution.converged {
                warn!("fixed point did not converge; results written to {}", out.directory.display());
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { config, betas } => {
            let cfg = load(&config)?;
            let root = cli::output_root(&cfg.output.directory);
            let out = cli::sweep(&cfg, betas.as_deref(), &root)?;
            print!("{}", cli::commands::fit_summary(&out.prediction, &out.fits, cfg.output.precision));
            if !out.all_converged() {
                warn!("some sweep members failed or did not converge; see {}", out.directory.display());
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::KernelCheck {
            samples,
            seed,
            backend,
            out,
            precision,
        } => {
            let backend = match backend {
                Backend::Quadrature => KernelBackend::Quadrature,
                Backend::Elliptic => KernelBackend::Elliptic,
            };
            let root = cli::output_root(&out);
            let (s, path) = cli::kernel_check(samples, seed, backend, &root, precision)?;
            let violations = s.iter().filter(|k| k.g > k.bound).count();
            println!("samples = {}", s.len());
            println!("bound_violations = {violations}");
            println!("csv = {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate => {
            let checks = cli::run_validation();
            for c in &checks {
                println!("{c}");
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(Error::Validation(format!("{failed} of {} checks failed", checks.len())));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(code) => code,
        Err(e) => {
            error!("{e}");
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
