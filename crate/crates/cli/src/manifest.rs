use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

impl FileRecord {
    fn of(path: PathBuf, data: &[u8]) -> Self {
        Self {
            path,
            sha256: hex(&Sha256::digest(data)),
            bytes: data.len() as u64,
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects the files a command reads and writes. Outputs are written whole
/// from an in-memory buffer, so the recorded hash is that of the bytes on
/// disk.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Reads and records an input file.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let data = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::MissingInput(path.display().to_string()),
            _ => CliError::io(path, e),
        })?;
        self.inputs.push(FileRecord::of(path.to_path_buf(), &data));
        Ok(data)
    }

    pub fn write_bytes(&mut self, name: &str, data: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, data).map_err(|e| CliError::io(&path, e))?;
        self.outputs.retain(|r| r.path != Path::new(name));
        self.outputs.push(FileRecord::of(PathBuf::from(name), data));
        Ok(path)
    }

    /// Writes whatever `fill` renders into `name`.
    pub fn write_with(&mut self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> tcl_chaos::Result<()>) -> Result<PathBuf, CliError> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        self.write_bytes(name, &buf)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut buf = serde_json::to_vec_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
        buf.push(b'\n');
        self.write_bytes(name, &buf)
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub tool_version: &'static str,
    pub library_version: &'static str,
    pub parallel: bool,
    pub config: &'a RunConfig,
    pub inputs: &'a [FileRecord],
    pub outputs: &'a [FileRecord],
    /// Free-form numbers a command wants to surface (dimensions, counts).
    pub summary: serde_json::Value,
    pub wall_time_s: f64,
}

impl Manifest<'_> {
    pub fn file_name(command: &str) -> String {
        format!("manifest-{command}.json")
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(Self::file_name(self.command));
        let mut buf = serde_json::to_vec_pretty(self).map_err(|e| CliError::Config(e.to_string()))?;
        buf.push(b'\n');
        fs::write(&path, buf).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_match_disk_contents() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::new(dir.path()).unwrap();
        a.write_bytes("x.csv", b"abc").unwrap();
        assert_eq!(a.outputs[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        a.write_bytes("x.csv", b"abcd").unwrap();
        assert_eq!(a.outputs.len(), 1);
        let back = a.read_input(&dir.path().join("x.csv")).unwrap();
        assert_eq!(back, b"abcd");
        assert_eq!(a.inputs[0].sha256, a.outputs[0].sha256);
    }
}
