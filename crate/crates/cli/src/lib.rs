//! Command implementations behind the `sbm` binary.
//!
//! Every file written here starts with `#` metadata lines (tool version,
//! config digest, master seed, generation time). Everything after them is
//! a pure function of the config and seed.

pub mod config;
pub mod fit;
pub mod output;
pub mod sample;
pub mod sweep;
pub mod theory_check;

use sbm_core::SbmError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "SBM_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("assertion failed: {0}")]
    Assertion(String),
    #[error(transparent)]
    Core(#[from] SbmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1 for failed checks, 2 for bad input or configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Assertion(_) => 1,
            _ => 2,
        }
    }
}

/// Runs `f` on a pool of `workers` threads, or rayon's default pool size
/// when `None`.
pub fn with_workers<T, F>(workers: Option<usize>, f: F) -> Result<T, CliError>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}
