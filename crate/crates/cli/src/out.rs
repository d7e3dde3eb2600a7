//! CSV and manifest output. All rows are formatted with `Display` (shortest
//! round-trip form) and written in a deterministic order, so identical
//! configs produce byte-identical files.

use anyhow::{Context, Result};
use std::fs;
use std::path::{Path, PathBuf};

pub fn write_csv(
    out_dir: &Path,
    name: &str,
    header: &str,
    rows: impl IntoIterator<Item = String>,
) -> Result<PathBuf> {
    let mut body = String::with_capacity(4096);
    body.push_str(header);
    body.push('\n');
    for row in rows {
        body.push_str(&row);
        body.push('\n');
    }
    let path = out_dir.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// FNV-1a over the canonical config text; enough to tell configs apart in a
/// manifest.
pub fn config_hash(text: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in text.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Writes `manifest.txt` recording the command, library version, config
/// hash, and the config body itself.
pub fn write_manifest(out_dir: &Path, command: &str, config_text: &str) -> Result<PathBuf> {
    let path = out_dir.join("manifest.txt");
    let body = format!(
        "command={command}\nversion={}\nconfig_fnv1a={:016x}\n--- config ---\n{config_text}",
        env!("CARGO_PKG_VERSION"),
        config_hash(config_text),
    );
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn ensure_dir(out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))
}

/// Compact float tag for filenames: `0.01 -> 0p01`.
pub fn float_tag(x: f64) -> String {
    format!("{x}").replace('.', "p").replace('-', "m")
}
