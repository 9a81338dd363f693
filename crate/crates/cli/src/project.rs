//! Project directory layout and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Component, Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{UsageError, BUILD_ID};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LAYOUT: [&str; 6] = ["frames", "views", "sfm", "checkpoints", "renders", "logs"];

pub struct Project {
    root: PathBuf,
}

impl Project {
    /// Opens (creating if needed) the project at `root`.
    pub fn open(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)
            .with_context(|| format!("creating project directory {}", root.display()))?;
        let root = root
            .canonicalize()
            .with_context(|| format!("resolving {}", root.display()))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Resolves an input path; relative paths are taken from the project root.
    pub fn input(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.root.join(path)
        }
    }

    /// Resolves an output path and refuses anything that escapes the
    /// project root. Parent directories are created.
    pub fn output(&self, path: &Path) -> Result<PathBuf> {
        let joined = normalize(&self.input(path));
        if !joined.starts_with(&self.root) || joined == self.root {
            return Err(UsageError(format!(
                "output {} lies outside the project directory {}",
                path.display(),
                self.root.display()
            ))
            .into());
        }
        if let Some(parent) = joined.parent() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
        Ok(joined)
    }

    pub fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }

    pub fn load_manifest(&self) -> Result<Manifest> {
        let path = self.root.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest::new());
        }
        let text = fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Appends a run to the manifest, hashing every output.
    pub fn record(&self, mut run: RunRecord, outputs: &[PathBuf]) -> Result<()> {
        let mut manifest = self.load_manifest()?;
        manifest.tool_version = BUILD_ID.to_string();
        for path in outputs {
            let rel = self.relative(path);
            let (sha256, bytes) = hash_file(path)?;
            manifest.artifacts.insert(
                rel.clone(),
                Artifact {
                    sha256,
                    bytes,
                    command: run.command.clone(),
                },
            );
            run.outputs.push(rel);
        }
        manifest.runs.push(run);
        let text = serde_json::to_string_pretty(&manifest)?;
        let path = self.root.join(MANIFEST_FILE);
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    /// Artifacts that are missing or whose content no longer matches.
    pub fn verify(&self) -> Result<Vec<String>> {
        let manifest = self.load_manifest()?;
        let mut problems = Vec::new();
        for (rel, art) in &manifest.artifacts {
            let path = self.root.join(rel);
            if !path.exists() {
                problems.push(format!("{rel}: missing"));
                continue;
            }
            let (sha, _) = hash_file(&path)?;
            if sha != art.sha256 {
                problems.push(format!("{rel}: hash mismatch"));
            }
        }
        Ok(problems)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub tool_version: String,
    pub layout: Vec<String>,
    pub artifacts: BTreeMap<String, Artifact>,
    pub runs: Vec<RunRecord>,
}

impl Manifest {
    fn new() -> Self {
        Self {
            tool_version: BUILD_ID.to_string(),
            layout: LAYOUT.iter().map(|s| format!("{s}/")).collect(),
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Artifact {
    pub sha256: String,
    pub bytes: u64,
    pub command: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct RunRecord {
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub threads: Option<usize>,
    /// Hash of the effective configuration text, when the command has one.
    pub config_sha256: Option<String>,
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn hash_file(path: &Path) -> Result<(String, u64)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok((sha256_hex(&bytes), bytes.len() as u64))
}

/// Lexical normalization; `..` never climbs above the first component.
fn normalize(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for c in path.components() {
        match c {
            Component::ParentDir => {
                out.pop();
            }
            Component::CurDir => {}
            other => out.push(other),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outputs_stay_inside() {
        let dir = tempfile::tempdir().unwrap();
        let p = Project::open(dir.path()).unwrap();
        assert!(p.output(Path::new("renders/a.png")).is_ok());
        assert!(p.output(Path::new("renders/../logs/x.csv")).is_ok());
        assert!(p.output(Path::new("../escape.txt")).is_err());
        assert!(p.output(Path::new("/tmp/elsewhere.txt")).is_err());
        assert!(p.output(Path::new(".")).is_err());
    }

    #[test]
    fn manifest_tracks_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let p = Project::open(dir.path()).unwrap();
        let out = p.output(Path::new("logs/a.txt")).unwrap();
        fs::write(&out, "hello").unwrap();
        p.record(
            RunRecord {
                command: "test".into(),
                seed: 42,
                ..Default::default()
            },
            &[out.clone()],
        )
        .unwrap();
        let m = p.load_manifest().unwrap();
        assert_eq!(
            m.artifacts["logs/a.txt"].sha256,
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
        assert_eq!(m.runs[0].outputs, vec!["logs/a.txt".to_string()]);
        assert!(p.verify().unwrap().is_empty());
        fs::write(&out, "changed").unwrap();
        assert_eq!(p.verify().unwrap(), vec!["logs/a.txt: hash mismatch".to_string()]);
        fs::remove_file(&out).unwrap();
        assert_eq!(p.verify().unwrap(), vec!["logs/a.txt: missing".to_string()]);
    }
}
