use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use zencli::{
    evaluate_analytic, parse_params, run_config, run_figure, validate_defaults, CliError, Command, ExperimentReport,
};

#[derive(Parser)]
#[command(
    name = "zenodyn",
    version,
    about = "Decay of a continuously monitored unstable level"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Regenerate the data behind a figure (fig5a, fig5b, fig6, fig7, fig8).
    Figure {
        id: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a JSON configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// decay, spectrum, decaytime, ladder or validate.
        #[arg(long)]
        cmd: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Evaluate a closed-form expression.
    Analytic {
        name: String,
        /// Parameters as key=value.
        #[arg(long, num_args = 0..)]
        params: Vec<String>,
    },
    /// Run the self-consistency suite on the default models.
    Validate {
        /// Skip the amplitude-oracle runs.
        #[arg(long)]
        quick: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("ZENODYN_THREADS") {
        let n: usize = v
            .parse()
            .with_context(|| format!("ZENODYN_THREADS={v} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

fn finish(report: ExperimentReport, strict: bool) -> Result<(), CliError> {
    print!("{report}");
    if strict && !report.passed() {
        return Err(CliError::Flags(report.failed()));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Cmd::Figure { id, out } => finish(run_figure(&id, &out)?, false),
        Cmd::Run { config, cmd, out } => {
            let command: Command = cmd.parse()?;
            finish(run_config(&config, command, &out)?, command == Command::Validate)
        }
        Cmd::Analytic { name, params } => {
            println!("{}", evaluate_analytic(&name, &parse_params(&params)?)?);
            Ok(())
        }
        Cmd::Validate { quick, out } => {
            let report = validate_defaults(quick)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| CliError::Io {
                    path: dir.clone(),
                    source: e,
                })?;
                report.write_json(&dir)?;
            }
            finish(report, true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
