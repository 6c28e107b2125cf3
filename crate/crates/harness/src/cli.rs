//! Command-line entry point.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use wbrtf_core::speech::SpeechInputs;
use wbrtf_core::stft::read_wav;

use crate::config::SweepSpec;
use crate::output::write_csv;
use crate::{selftest, sweep, HarnessError};

/// Environment variable capping the number of worker threads.
pub const WORKERS_ENV: &str = "WBRTF_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "wbrtf", version, about = "Wideband RTF estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte-Carlo sweep on a synthetic scenario.
    Synthetic {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Speech-in-noise experiment from WAV files.
    Speech {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        #[arg(long)]
        target_rir: PathBuf,
        #[arg(long)]
        noise_rir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Conditional and unconditional bounds per sweep point.
    Crb {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs the invariant suite on small random configurations.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code: 0 success, 1 validation or usage error, 2 I/O error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_workers() {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_workers() -> Result<(), HarnessError> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| HarnessError::Config(format!("{WORKERS_ENV} must be a positive integer (got {raw:?})")))?;
    // a second initialization in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn load_wav(path: &Path) -> Result<wbrtf_core::stft::AudioClip, HarnessError> {
    read_wav(path).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    })
}

fn execute(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Synthetic { config, out } => {
            let spec = SweepSpec::load(&config)?;
            write_csv(&sweep::run_sweep(&spec)?, &out)
        }
        Command::Crb { config, out } => {
            let spec = SweepSpec::load(&config)?;
            write_csv(&sweep::run_crb(&spec)?, &out)
        }
        Command::Speech {
            config,
            target,
            noise,
            target_rir,
            noise_rir,
            out,
        } => {
            let spec = SweepSpec::load(&config)?;
            let inputs = SpeechInputs {
                target: load_wav(&target)?,
                noise: load_wav(&noise)?,
                target_rir: load_wav(&target_rir)?,
                noise_rir: load_wav(&noise_rir)?,
            };
            write_csv(&sweep::run_speech_sweep(&spec, &inputs)?, &out)
        }
        Command::Selftest { seed } => {
            let checks = selftest::run_all(seed);
            for c in &checks {
                println!("{c}");
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(HarnessError::SelftestFailed(failed));
            }
            Ok(())
        }
    }
}
