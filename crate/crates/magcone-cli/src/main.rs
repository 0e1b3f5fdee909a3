//! Command-line driver: model validation, single solves, aperture sweeps,
//! structural diagnostics and matrix dumps, with reproducible JSON/CSV output.

mod commands;
mod config;
mod records;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "magcone",
    about = "Low-lying spectrum of the Neumann magnetic Laplacian on a circular cone",
    long_about = "Computes the low-lying eigenvalues and eigenvectors of the magnetic
Neumann Laplacian on a cone of aperture alpha with a uniform field tilted
by beta, in the rescaled spherical coordinates where the physical
eigenvalue is alpha times the reported one. Results are written as JSON
(machine-readable, schema_version field) plus plot-ready CSV."
)]
struct Cli {
    /// Flat key=value configuration file (CLI flags override it).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Cone aperture, radians, 0 < alpha < pi.
    #[arg(long, global = true)]
    alpha: Option<f64>,

    /// Field tilt against the cone axis, radians, 0 <= beta <= pi/2.
    #[arg(long, global = true)]
    beta: Option<f64>,

    /// Number of eigenpairs per point.
    #[arg(long, global = true)]
    k: Option<usize>,

    /// Radial cells.
    #[arg(long, global = true)]
    nt: Option<usize>,

    /// Polar cells.
    #[arg(long, global = true)]
    nphi: Option<usize>,

    /// Fourier cutoff (modes -m_max..m_max).
    #[arg(long, global = true)]
    mmax: Option<usize>,

    /// Radial truncation of the computational box.
    #[arg(long, global = true)]
    tmax: Option<f64>,

    /// Solver residual tolerance ||K u - lambda M u|| / ||M u||.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Seed of the eigensolver's initial block.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Exponential weight rate for the decay diagnostic.
    #[arg(long, global = true)]
    eps0: Option<f64>,

    /// Comma-separated aperture sweep values.
    #[arg(long = "sweep-alphas", global = true)]
    sweep_alphas: Option<String>,

    /// Comma-separated tilt sweep values.
    #[arg(long = "sweep-betas", global = true)]
    sweep_betas: Option<String>,

    /// Worker threads for sweep points (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum OperatorKind {
    Full,
    Model,
    Reduced,
}

#[derive(Subcommand)]
enum Command {
    /// Run the model-problem validation set (radial ladder, threshold curve,
    /// disk reduction); nonzero exit on any failed check.
    ValidateModels,
    /// Assemble and solve a single (alpha, beta) point with diagnostics.
    Solve,
    /// Solve the (alpha, beta) sweep grid and fit expansion coefficients.
    Sweep,
    /// Run the sweep-based structural checks; exit status reflects the
    /// scaling/boundedness windows.
    Diagnose,
    /// Write the assembled pair in the documented triplet text format.
    DumpMatrix {
        /// Which operator to dump.
        #[arg(long, value_enum, default_value = "full")]
        operator: OperatorKind,
    },
}

fn resolve_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.load_file(path)?;
    }
    macro_rules! over {
        ($field:ident, $opt:expr) => {
            if let Some(v) = $opt {
                cfg.$field = v.clone();
            }
        };
    }
    over!(alpha, cli.alpha);
    over!(beta, cli.beta);
    over!(k, cli.k);
    over!(n_t, cli.nt);
    over!(n_phi, cli.nphi);
    over!(m_max, cli.mmax);
    over!(t_max, cli.tmax);
    over!(tol, cli.tol);
    over!(seed, cli.seed);
    over!(eps0, cli.eps0);
    over!(jobs, cli.jobs);
    if let Some(v) = &cli.out {
        cfg.out = v.clone();
    }
    if let Some(s) = &cli.sweep_alphas {
        cfg.set("sweep_alphas", s)?;
    }
    if let Some(s) = &cli.sweep_betas {
        cfg.set("sweep_betas", s)?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("configuration error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if cfg.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build_global()
        {
            eprintln!("thread pool setup failed: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match &cli.command {
        Command::ValidateModels => commands::validate_models(&cfg),
        Command::Solve => commands::solve(&cfg),
        Command::Sweep => commands::sweep(&cfg),
        Command::Diagnose => commands::diagnose(&cfg),
        Command::DumpMatrix { operator } => commands::dump_matrix(&cfg, *operator),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let msg = format!("{e:#}");
            eprintln!("error: {msg}");
            if msg.contains("invalid cone parameters") || msg.contains("invalid grid") {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
