//! Output files: atomic writes, content hashes, and the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use nehari_core::{Field, SolveResult, Spectrum, SymmetryReport};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Collects artifacts for one output directory. Every file goes through
/// a temp-file-and-rename so a crash never leaves a truncated artifact,
/// and the manifest records a sha256 per file.
pub struct Sink {
    dir: PathBuf,
    pub hashes: BTreeMap<String, String>,
    quiet: bool,
}

impl Sink {
    pub fn new(dir: &Path, quiet: bool) -> Result<Sink> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            hashes: BTreeMap::new(),
            quiet,
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let tmp = self.dir.join(format!("{name}.tmp"));
        let path = self.dir.join(name);
        std::fs::write(&tmp, bytes)
            .with_context(|| format!("cannot write {}", tmp.display()))?;
        std::fs::rename(&tmp, &path)
            .with_context(|| format!("cannot move {} into place", path.display()))?;
        self.hashes.insert(name.to_string(), sha256_hex(bytes));
        if !self.quiet {
            eprintln!("wrote {}", path.display());
        }
        Ok(())
    }

    pub fn write_field(&mut self, name: &str, field: &Field) -> Result<()> {
        let mut buf = Vec::new();
        nehari_core::write_field_csv(field, &mut buf)?;
        self.write(name, &buf)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

#[derive(Serialize)]
pub struct SpectrumSummary {
    pub clusters: Vec<ClusterSummary>,
    pub unique_principal: bool,
}

#[derive(Serialize)]
pub struct ClusterSummary {
    pub eigenvalue: f64,
    pub multiplicity: usize,
    pub members: Vec<f64>,
}

pub fn spectrum_summary(spec: &Spectrum) -> SpectrumSummary {
    SpectrumSummary {
        clusters: spec
            .clusters()
            .iter()
            .map(|c| ClusterSummary {
                eigenvalue: c.eigenvalue,
                multiplicity: c.multiplicity(),
                members: c.members.clone(),
            })
            .collect(),
        unique_principal: spec.is_unique_principal(),
    }
}

#[derive(Serialize)]
pub struct SolutionSummary {
    pub energy: f64,
    pub min: f64,
    pub max: f64,
    pub iterations: usize,
    pub grad_rel: f64,
    pub stalled: bool,
    pub morse_index: Option<usize>,
    pub escape_rounds: usize,
}

pub fn solution_summary(r: &SolveResult) -> SolutionSummary {
    SolutionSummary {
        energy: r.energy,
        min: r.field.min(),
        max: r.field.max(),
        iterations: r.iterations,
        grad_rel: r.grad_rel,
        stalled: r.stalled,
        morse_index: r.morse_index,
        escape_rounds: r.escape_rounds,
    }
}

/// Everything a run leaves behind besides the data files. The config
/// echo is the fully merged configuration, so `config_hash` changes
/// exactly when some effective field does.
#[derive(Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub resolution: u32,
    pub lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumSummary>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub solutions: BTreeMap<String, SolutionSummary>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub symmetry: BTreeMap<String, SymmetryReport>,
    pub artifacts: BTreeMap<String, String>,
    pub timings_ms: BTreeMap<String, u64>,
}

impl Manifest {
    pub fn new(command: &str, config_echo: &serde_json::Value, resolution: u32) -> Manifest {
        let canonical = serde_json::to_string(config_echo).unwrap_or_default();
        Manifest {
            tool: "nehari-forge",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config: config_echo.clone(),
            config_hash: sha256_hex(canonical.as_bytes()),
            resolution,
            lambda: f64::NAN,
            spectrum: None,
            solutions: BTreeMap::new(),
            symmetry: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            timings_ms: BTreeMap::new(),
        }
    }

    pub fn finish(mut self, sink: &mut Sink) -> Result<()> {
        self.artifacts = sink.hashes.clone();
        sink.write_json("manifest.json", &self)
    }
}

pub struct Stopwatch {
    last: std::time::Instant,
}

impl Stopwatch {
    pub fn start() -> Stopwatch {
        Stopwatch {
            last: std::time::Instant::now(),
        }
    }

    /// Time since the previous lap, in whole milliseconds.
    pub fn lap(&mut self) -> u64 {
        let now = std::time::Instant::now();
        let ms = now.duration_since(self.last).as_millis() as u64;
        self.last = now;
        ms
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn sink_writes_atomically_and_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let mut sink = Sink::new(dir.path(), true).unwrap();
        sink.write("a.txt", b"hello").unwrap();
        assert_eq!(std::fs::read(dir.path().join("a.txt")).unwrap(), b"hello");
        assert!(!dir.path().join("a.txt.tmp").exists());
        assert_eq!(sink.hashes["a.txt"], sha256_hex(b"hello"));
    }

    #[test]
    fn manifest_hash_tracks_config() {
        let a = serde_json::json!({"p": 4.0});
        let b = serde_json::json!({"p": 3.0});
        let ma = Manifest::new("solve", &a, 8);
        let mb = Manifest::new("solve", &b, 8);
        let ma2 = Manifest::new("solve", &a, 8);
        assert_ne!(ma.config_hash, mb.config_hash);
        assert_eq!(ma.config_hash, ma2.config_hash);
    }
}
