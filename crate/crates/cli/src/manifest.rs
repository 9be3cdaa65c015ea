use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Run record: configuration echo plus a SHA-256 of every input file.
///
/// Contains nothing time- or host-dependent, so identical runs produce
/// identical manifests.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: Option<u64>,
    pub config: BTreeMap<&'static str, Value>,
    pub inputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &'static str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: None,
            config: BTreeMap::new(),
            inputs: BTreeMap::new(),
        }
    }

    pub fn config(mut self, key: &'static str, value: impl Serialize) -> Self {
        self.config
            .insert(key, serde_json::to_value(value).expect("config values serialize"));
        self
    }

    pub fn input(&mut self, path: &Path) -> io::Result<()> {
        let digest = Sha256::digest(fs::read(path)?);
        self.inputs
            .insert(path.display().to_string(), hex::encode(digest));
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.to_json())
    }
}
