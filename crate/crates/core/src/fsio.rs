//! Atomic file writes and content digests.

use std::io::{self, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

/// Writes `bytes` to a temporary sibling of `path` and renames it into place,
/// so readers never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a file's bytes, or of a directory tree (sorted relative paths
/// and file contents).
pub fn digest_path(path: &Path) -> io::Result<String> {
    let meta = std::fs::metadata(path)?;
    if meta.is_file() {
        return Ok(sha256_hex(&std::fs::read(path)?));
    }
    let mut hasher = Sha256::new();
    let mut entries: Vec<_> = walkdir::WalkDir::new(path)
        .min_depth(1)
        .sort_by_file_name()
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(io::Error::other)?;
    entries.retain(|e| e.file_type().is_file());
    for entry in entries {
        let rel = entry
            .path()
            .strip_prefix(path)
            .expect("walkdir yields children");
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0]);
        let content = std::fs::read(entry.path())?;
        hasher.update((content.len() as u64).to_le_bytes());
        hasher.update(&content);
    }
    Ok(hex::encode(hasher.finalize()))
}
