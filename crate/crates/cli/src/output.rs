//! Run provenance and diff-stable number formatting shared by every
//! subcommand. All report files embed the artifact version, the driving
//! seed, and a SHA-256 tying them back to the manifest (or, for
//! flag-driven commands, to the canonical flag string), so identical
//! inputs always produce byte-identical outputs.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Version stamp written into every CLI-authored artifact.
pub const ARTIFACT_VERSION: u32 = 1;

/// Provenance triple embedded in every output file.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub artifact_version: u32,
    pub seed: u64,
    pub manifest_sha256: String,
}

impl Provenance {
    pub fn new(seed: u64, manifest_sha256: String) -> Self {
        Provenance { artifact_version: ARTIFACT_VERSION, seed, manifest_sha256 }
    }

    /// `#`-comment header for text artifacts (CSV, configs, circuit dumps).
    pub fn header(&self) -> String {
        format!(
            "# artifact_version = {}\n# seed = {}\n# manifest_sha256 = {}\n",
            self.artifact_version, self.seed, self.manifest_sha256
        )
    }
}

/// SHA-256 digest as lowercase hex.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Manifest-hash stand-in for subcommands that run without a manifest:
/// the canonical flag string is hashed instead.
pub fn flags_digest(flags: &str) -> String {
    sha256_hex(flags.as_bytes())
}

/// Fixed decimal formatting with 6 significant digits, for magnitudes in
/// the range reports actually contain (angles, accuracies, losses).
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0.00000".into();
    }
    let exponent = x.abs().log10().floor() as i32;
    let decimals = (5 - exponent).clamp(0, 17) as usize;
    format!("{x:.decimals$}")
}

/// `sig6` rounding for values headed into JSON reports, keeping them
/// numeric while staying diff-stable.
pub fn round6(x: f64) -> f64 {
    sig6(x).parse().expect("sig6 emits valid decimals")
}

/// Writes a text artifact, creating parent directories as needed.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating directory {}", parent.display()))?;
        }
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes a JSON artifact (pretty-printed, trailing newline).
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value).context("serializing JSON")?;
    body.push('\n');
    write_text(path, &body)
}
