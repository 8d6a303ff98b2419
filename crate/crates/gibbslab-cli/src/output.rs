//! Output-file plumbing: fixed names, atomic renames, no timestamps.

use std::fs;
use std::path::Path;

use crate::CliError;

/// Writes `content` to `dir/name` via a temporary file and rename, so a
/// crashed run never leaves a half-written report behind.
pub fn write_atomic(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, content)?;
    fs::rename(&tmp, dir.join(name))?;
    Ok(())
}
