//! Output directories, digests and run manifests.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use railsim_core::io::write_atomic;

/// The output directory exists and may not be replaced.
#[derive(Debug)]
pub struct OutputExists(pub String);

impl fmt::Display for OutputExists {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for OutputExists {}

/// Creates `dir`, or clears it when `force` is set and it holds a previous
/// railsim output. Directories with other content are never removed.
pub fn prepare(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let empty = std::fs::read_dir(dir)?.next().is_none();
        if !empty {
            if !force {
                return Err(OutputExists(format!("{} exists; pass --force to replace it", dir.display())).into());
            }
            if !dir.join("manifest.json").is_file() {
                return Err(OutputExists(format!(
                    "{} is not a railsim output (no manifest.json); refusing to replace it",
                    dir.display()
                ))
                .into());
            }
            std::fs::remove_dir_all(dir).with_context(|| format!("removing {}", dir.display()))?;
        }
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

/// SHA-256 of every file below `dir`, keyed by relative path with `/`.
pub fn digest_tree(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d)? {
            let p = e?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel: Vec<String> = p
                    .strip_prefix(dir)?
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy().into_owned())
                    .collect();
                out.insert(rel.join("/"), hex(&Sha256::digest(std::fs::read(&p)?)));
            }
        }
    }
    Ok(out)
}

/// Digest over a file map, stable under directory traversal order.
pub fn combined_digest(files: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (k, v) in files {
        h.update(k.as_bytes());
        h.update([0]);
        h.update(v.as_bytes());
        h.update(*b"\n");
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}
