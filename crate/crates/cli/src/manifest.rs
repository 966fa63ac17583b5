use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub threads: usize,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub results: serde_json::Value,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Collects the pieces of a manifest while a command runs.
pub struct Recorder {
    command: String,
    started: Instant,
    started_unix: u64,
    inputs: Vec<FileDigest>,
    outputs: Vec<PathBuf>,
    pub seeds: BTreeMap<String, u64>,
    pub results: serde_json::Map<String, serde_json::Value>,
}

impl Recorder {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            started: Instant::now(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seeds: BTreeMap::new(),
            results: serde_json::Map::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> std::io::Result<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn write(&mut self, path: PathBuf, text: &str) -> std::io::Result<()> {
        std::fs::write(&path, text)?;
        self.outputs.push(path);
        Ok(())
    }

    /// Registers a file written by someone else.
    pub fn record(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    pub fn result(&mut self, key: &str, value: impl Serialize) {
        self.results
            .insert(key.to_string(), serde_json::to_value(value).expect("serialisable result"));
    }

    /// Writes `<dir>/<command>.manifest.json` and returns its path.
    pub fn finish(
        self,
        dir: &Path,
        config: &impl Serialize,
        threads: usize,
    ) -> std::io::Result<PathBuf> {
        let outputs = self
            .outputs
            .iter()
            .map(|p| {
                Ok(FileDigest {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<std::io::Result<Vec<_>>>()?;
        let manifest = RunManifest {
            command: self.command.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::to_value(config).expect("serialisable config"),
            seeds: self.seeds,
            threads,
            inputs: self.inputs,
            outputs,
            started_unix: self.started_unix,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            results: serde_json::Value::Object(self.results),
        };
        let path = dir.join(format!("{}.manifest.json", self.command));
        let text = serde_json::to_string_pretty(&manifest).expect("serialisable manifest");
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }
}
