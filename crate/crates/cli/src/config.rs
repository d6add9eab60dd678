//! `key = value` config files, merged into the argument list.
//!
//! The file's entries become `--key value` pairs placed right after the
//! subcommand, ahead of anything typed on the command line. Every option
//! overrides itself, so a flag given explicitly wins over the file.

use std::ffi::OsString;
use std::path::Path;

use crate::CliError;

/// Parses the file body. Blank lines and `#` comments are skipped; keys may
/// use `_` or `-`.
pub fn parse(text: &str, origin: &Path) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("{}:{}: expected `key = value`", origin.display(), i + 1))
        })?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(CliError::Usage(format!(
                "{}:{}: invalid key `{}`",
                origin.display(),
                i + 1,
                k.trim()
            )));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Finds `--config PATH` (or `--config=PATH`) and splices the file's
/// entries in after the subcommand name.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut path = None;
    let mut subcommand_at = None;
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--config" {
            path = args.get(i + 1).cloned();
            i += 2;
            continue;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            path = Some(OsString::from(p));
        } else if subcommand_at.is_none() && !a.starts_with('-') {
            subcommand_at = Some(i);
        }
        i += 1;
    }
    let (Some(path), Some(at)) = (path, subcommand_at) else {
        return Ok(args);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        context: format!("reading config {}", path.display()),
        source,
    })?;
    let mut merged = args[..=at].to_vec();
    for (k, v) in parse(&text, path)? {
        merged.push(format!("--{k}").into());
        merged.push(v.into());
    }
    merged.extend_from_slice(&args[at + 1..]);
    Ok(merged)
}
