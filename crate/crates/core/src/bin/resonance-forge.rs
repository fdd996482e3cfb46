use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use resonance_forge::cli_report::{self, Command, Experiment};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    Spectrum,
    Prolong,
    Normalform,
    Verify,
    Report,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Spectrum => Command::Spectrum,
            Cmd::Prolong => Command::Prolong,
            Cmd::Normalform => Command::Normalform,
            Cmd::Verify => Command::Verify,
            Cmd::Report => Command::Report,
        }
    }
}

/// Resonance normal forms for contracting cocycles of jets.
#[derive(Debug, Parser)]
#[command(name = "resonance-forge", version)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn fail(err: resonance_forge::Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(cli_report::exit_code(&err) as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = std::env::var("RESONANCE_FORGE_THREADS").ok();
    match cli_report::thread_cap(threads.as_deref()) {
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("error: cannot start thread pool: {e}");
                return ExitCode::from(1);
            }
        }
        Ok(None) => {}
        Err(e) => return fail(e),
    }
    let exp = match Experiment::load(&cli.config, cli.seed) {
        Ok(e) => e,
        Err(e) => return fail(e),
    };
    let out = cli_report::output_dir(&exp, cli.out.as_deref());
    match cli_report::execute(cli.command.into(), &exp, &out) {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            match outcome.first_failure {
                Some(name) if !outcome.passed => {
                    eprintln!("check failed: {name}");
                    ExitCode::from(1)
                }
                _ => ExitCode::SUCCESS,
            }
        }
        Err(e) => fail(e),
    }
}
