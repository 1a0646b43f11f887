//! `hara`: run, resume, lint, score, export and review hazard analyses.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hara_core::export::ExportFormat;
use hara_core::pipeline::Step;

#[derive(Parser)]
#[command(name = "hara", version, about = "LLM-assisted hazard analysis and risk assessment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Real,
    Mock,
}

#[derive(clap::Args)]
struct BackendOpts {
    /// LLM backend; overrides the configuration file.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Directory of recorded responses for the mock backend.
    #[arg(long)]
    fixtures: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on an item definition.
    Run {
        /// Item definition JSON file.
        item: PathBuf,
        #[command(flatten)]
        backend: BackendOpts,
        /// Pipeline configuration (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory; defaults to runs/<item id>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stop after this step, leaving the run resumable.
        #[arg(long)]
        stop_after: Option<Step>,
    },
    /// Continue a run from its first invalid or missing checkpoint.
    Resume {
        run_dir: PathBuf,
        #[command(flatten)]
        backend: BackendOpts,
    },
    /// Lint safety goals in a table.json or a text file with one goal per line.
    Lint {
        path: PathBuf,
        /// Configuration whose lint rules and stop words apply.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Aggregate reviewer verdicts from a JSON-lines file.
    Scores {
        verdicts: PathBuf,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Render a run's table as CSV, Markdown or JSON.
    Export {
        run_dir: PathBuf,
        #[arg(long, default_value = "csv")]
        format: ExportFormat,
        /// Write to a file instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write a sample item, configuration and mock fixtures to a directory.
    Demo {
        dir: PathBuf,
        /// Number of scenarios (1 to 10); rows are twice this.
        #[arg(long, default_value_t = 3)]
        scenarios: usize,
    },
    /// Serve the review API for a completed run on localhost.
    Serve {
        run_dir: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { item, backend, config, out, stop_after } => {
            commands::run(&item, backend.into(), config.as_deref(), out, stop_after)
        }
        Command::Resume { run_dir, backend } => commands::resume(&run_dir, backend.into()),
        Command::Lint { path, config } => commands::lint(&path, config.as_deref()),
        Command::Scores { verdicts, json } => commands::scores(&verdicts, json),
        Command::Export { run_dir, format, output } => commands::export(&run_dir, format, output.as_deref()),
        Command::Demo { dir, scenarios } => commands::demo(&dir, scenarios),
        Command::Serve { run_dir, port } => commands::serve(&run_dir, port),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

impl From<BackendOpts> for commands::BackendOverride {
    fn from(o: BackendOpts) -> Self {
        commands::BackendOverride {
            backend: o.backend.map(|b| match b {
                BackendArg::Real => hara_core::pipeline::Backend::Real,
                BackendArg::Mock => hara_core::pipeline::Backend::Mock,
            }),
            fixtures: o.fixtures,
        }
    }
}
