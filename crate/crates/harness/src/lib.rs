//! Experiment harness: TOML-configured synthetic sweeps, bound curves and
//! speech experiments, written as CSV.

pub mod cli;
pub mod config;
pub mod output;
pub mod selftest;
pub mod sweep;

pub use config::SweepSpec;
pub use sweep::ResultRow;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("cannot access {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("sweep point {parameter} = {value}: {source}")]
    Point {
        parameter: &'static str,
        value: f64,
        source: wbrtf_core::Error,
    },
    #[error(transparent)]
    Core(#[from] wbrtf_core::Error),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0} selftest check(s) failed")]
    SelftestFailed(usize),
}

impl HarnessError {
    /// 2 for I/O failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        let core_io = |e: &wbrtf_core::Error| matches!(e, wbrtf_core::Error::Io(_) | wbrtf_core::Error::Audio(_));
        match self {
            HarnessError::Io { .. } | HarnessError::Csv(_) => 2,
            HarnessError::Point { source, .. } | HarnessError::Core(source) if core_io(source) => 2,
            _ => 1,
        }
    }
}
