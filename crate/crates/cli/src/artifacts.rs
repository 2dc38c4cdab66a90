//! Atomic artifact output and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use sha2::{Digest, Sha256};

use crate::config::{Command, RunConfig};
use crate::error::CliError;

/// Git-style content hash: SHA-256 of `"blob <len>\0"` followed by the bytes.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    let mut s = String::with_capacity(64);
    for b in h.finalize().iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Writes `bytes` to `path` through a sibling temporary file and a rename,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Runtime(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Output directory of one command; records the hash of every artifact.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    written: Vec<(String, String)>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Self {
        Artifacts {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        write_atomic(&self.path(name), content.as_bytes())?;
        self.written.push((name.to_string(), content_hash(content.as_bytes())));
        Ok(())
    }

    pub fn names(&self) -> Vec<&str> {
        self.written.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Writes `manifest_<command>.txt`: the full configuration, which
    /// re-runs the command, then hashes, seed and timing under `manifest.`.
    pub fn write_manifest(
        &mut self,
        command: Command,
        cfg: &RunConfig,
        inputs: &[(&str, &Path)],
        started_unix: u64,
        wall: Duration,
    ) -> Result<(), CliError> {
        let cfg = RunConfig {
            command: Some(command),
            ..cfg.clone()
        };
        let mut s = format!("# caedp {} manifest\n", command.name());
        s.push_str(&cfg.to_text());
        let _ = writeln!(s, "manifest.version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "manifest.seed = {}", cfg.seed);
        for (role, path) in inputs {
            let bytes = fs::read(path)?;
            let _ = writeln!(s, "manifest.input.{role} = {}", content_hash(&bytes));
        }
        for (name, hash) in &self.written {
            let _ = writeln!(s, "manifest.artifact.{name} = {hash}");
        }
        let _ = writeln!(s, "manifest.started_unix = {started_unix}");
        let _ = writeln!(s, "manifest.wall_seconds = {:.3}", wall.as_secs_f64());
        let name = format!("manifest_{}.txt", command.name());
        write_atomic(&self.path(&name), s.as_bytes())
    }
}
