use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use psp_gmres::cli::{cmd_benchmark, cmd_solve, RunManifest};

#[derive(Parser)]
#[command(
    name = "psp-gmres",
    about = "Restarted GMRES with progressive statistical preconditioning",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the convergence-improvement benchmark on the random
    /// seven-diagonal family.
    Benchmark {
        /// Comma-separated system sizes, e.g. 20,80,150,350,700
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Preconditioner half-bandwidth (1 = tridiagonal).
        #[arg(long = "band-d", default_value_t = 1)]
        band_d: usize,
        /// Absolute residual-norm tolerance.
        #[arg(long, default_value_t = 1e-8)]
        epsilon: f64,
        /// Max inner iterations per restart cycle.
        #[arg(long = "max-inner", default_value_t = 200)]
        max_inner: usize,
        /// Max restart cycles.
        #[arg(long, default_value_t = 50)]
        restarts: usize,
        /// Solves per size; the first is unpreconditioned.
        #[arg(long, default_value_t = 2)]
        steps: usize,
        /// Output directory for artifacts.
        #[arg(long)]
        out: PathBuf,
        /// Also write an SVG convergence plot per size.
        #[arg(long = "emit-plot")]
        emit_plot: bool,
        /// Ring-buffer cap on the probe history.
        #[arg(long = "history-cap")]
        history_cap: Option<usize>,
        /// Clear the probe history after every preconditioner refit.
        #[arg(long = "reset-history")]
        reset_history: bool,
    },
    /// Solve a Matrix Market system.
    Solve {
        /// Matrix Market coordinate file.
        #[arg(long)]
        matrix: PathBuf,
        /// Optional right-hand side, one value per line. Defaults to
        /// the vector 1..n.
        #[arg(long)]
        rhs: Option<PathBuf>,
        #[arg(long = "band-d", default_value_t = 1)]
        band_d: usize,
        #[arg(long, default_value_t = 1e-8)]
        epsilon: f64,
        #[arg(long = "max-inner", default_value_t = 200)]
        max_inner: usize,
        #[arg(long, default_value_t = 50)]
        restarts: usize,
        /// Repeated solves; with steps > 1 later solves reuse the
        /// preconditioner fitted from earlier probe history.
        #[arg(long, default_value_t = 1)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "history-cap")]
        history_cap: Option<usize>,
        #[arg(long = "reset-history")]
        reset_history: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (manifest, run): (RunManifest, fn(&RunManifest) -> _) = match cli.command {
        Command::Benchmark {
            sizes,
            seed,
            band_d,
            epsilon,
            max_inner,
            restarts,
            steps,
            out,
            emit_plot,
            history_cap,
            reset_history,
        } => (
            RunManifest {
                subcommand: "benchmark".into(),
                sizes,
                seed,
                band_d,
                epsilon,
                max_inner,
                restarts,
                steps,
                matrix: None,
                rhs: None,
                out,
                emit_plot,
                history_cap,
                reset_history,
            },
            cmd_benchmark,
        ),
        Command::Solve {
            matrix,
            rhs,
            band_d,
            epsilon,
            max_inner,
            restarts,
            steps,
            out,
            history_cap,
            reset_history,
        } => (
            RunManifest {
                subcommand: "solve".into(),
                sizes: vec![],
                seed: 0,
                band_d,
                epsilon,
                max_inner,
                restarts,
                steps,
                matrix: Some(matrix),
                rhs,
                out,
                emit_plot: false,
                history_cap,
                reset_history,
            },
            cmd_solve,
        ),
    };
    match run(&manifest) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
