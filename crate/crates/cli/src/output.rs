use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::{CliError, VERSION};

/// Provenance written at the top of every output file.
#[derive(Debug, Clone)]
pub struct Meta {
    pub command: &'static str,
    pub config_sha256: String,
    pub seed: u64,
}

impl Meta {
    pub fn header(&self) -> String {
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        format!(
            "# tool=sbm {VERSION}\n# command={}\n# config_sha256={}\n# master_seed={}\n# generated_unix={now}\n",
            self.command, self.config_sha256, self.seed
        )
    }
}

pub fn write_with_header(path: &Path, meta: &Meta, body: &str) -> Result<(), CliError> {
    let mut f = fs::File::create(path)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(meta.header().as_bytes())?;
    f.write_all(body.as_bytes())?;
    Ok(())
}

/// Text with the `#` metadata lines removed.
pub fn body(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))
}
