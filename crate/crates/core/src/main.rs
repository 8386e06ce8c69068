use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fsl::cli::{self, PlotKind};

#[derive(Parser)]
#[command(name = "fsl", version, about = "Verify f-divergence gradient identities and run covariance descent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config file.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract a plot-ready series from a results CSV.
    Plot {
        results: PathBuf,
        /// residual_vs_h, objective_vs_iteration or constant_vs_case
        #[arg(long)]
        kind: PlotKind,
    },
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let code = match args.command {
        Command::Run { config, out } => match cli::run(&config, out.as_deref()) {
            Ok(o) => {
                println!(
                    "{}: {} passed, {} failed -> {}",
                    if o.success { "ok" } else { "FAILED" },
                    o.passed,
                    o.failed,
                    o.results_csv.display()
                );
                o.exit_code()
            }
            Err(e) => {
                eprintln!("error: {e}");
                cli::error_exit_code(&e)
            }
        },
        Command::Plot { results, kind } => match cli::emit_plot_data(&results, kind) {
            Ok(s) => {
                println!("wrote {} rows to {}", s.rows, s.path.display());
                for (series, slope) in &s.slopes {
                    println!("slope {series}: {slope:.4}");
                }
                if let Some(m) = s.monotone {
                    println!("monotone: {m}");
                }
                cli::EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                cli::EXIT_FAILED
            }
        },
    };
    ExitCode::from(code as u8)
}
