//! Configuration ingestion, dataset files and the TCP frame stream.

pub mod config;
pub mod images;
pub mod kitti;
pub mod stream;
pub mod text;

use std::path::Path;

use crate::error::Result;

/// Writes a file through a temporary sibling and a rename, so readers never
/// observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(e) => format!("{}.partial", e.to_string_lossy()),
        None => "partial".to_string(),
    });
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Zero-padded frame file stem.
pub fn frame_name(index: usize) -> String {
    format!("{index:06}")
}
