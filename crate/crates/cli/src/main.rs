use std::path::PathBuf;
use std::process::ExitCode;

use chaoslab_cli::config::{ExperimentConfig, Preset};
use chaoslab_cli::error::{CliError, Result};
use chaoslab_cli::plotdata::emit_plotdata;
use chaoslab_cli::runner::{self, RunOutcome};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chaoslab", version, about = "Propagation-of-chaos experiments on the torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long, hide = true)]
        halt_after: Option<usize>,
    },
    /// Continue a partial run from its output directory.
    Resume {
        dir: PathBuf,
        #[arg(long, hide = true)]
        halt_after: Option<usize>,
    },
    /// Merge series CSVs into one long-format CSV.
    EmitPlotdata {
        files: Vec<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// List the available presets.
    ListPresets,
    /// Parse and check a config without running it.
    ValidateConfig { config: PathBuf },
}

fn read_config(path: &PathBuf) -> Result<(String, ExperimentConfig)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let cfg = ExperimentConfig::parse(&text)?;
    Ok((text, cfg))
}

fn report(outcome: &RunOutcome) -> i32 {
    for v in &outcome.verdicts {
        println!("{v}");
    }
    if !outcome.complete {
        println!("halted; resume with `chaoslab resume {}`", outcome.dir.display());
    }
    outcome.exit_code()
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run { config, output_dir, halt_after } => {
            let (text, cfg) = read_config(&config)?;
            let dir = runner::output_dir(&cfg, output_dir.as_deref());
            Ok(report(&runner::run(&text, &dir, halt_after)?))
        }
        Command::Resume { dir, halt_after } => Ok(report(&runner::resume(&dir, halt_after)?)),
        Command::EmitPlotdata { files, output } => {
            let csv = emit_plotdata(&files)?;
            match output {
                Some(path) => std::fs::write(&path, csv).map_err(CliError::io(&path))?,
                None => print!("{csv}"),
            }
            Ok(0)
        }
        Command::ListPresets => {
            for p in Preset::ALL {
                println!("{:<18} {}", p.name(), p.summary());
            }
            Ok(0)
        }
        Command::ValidateConfig { config } => {
            let (_, cfg) = read_config(&config)?;
            println!("ok: preset {}", cfg.preset().name());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
