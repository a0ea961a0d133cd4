//! Self-describing output files.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::config::{sha256_hex, ExperimentConfig};
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct Writer<'a> {
    config: &'a ExperimentConfig,
    command: &'static str,
    pub written: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    pub fn new(config: &'a ExperimentConfig, command: &'static str) -> Self {
        Writer { config, command, written: Vec::new() }
    }

    fn path(&self, name: &str) -> Result<PathBuf, CliError> {
        let dir = &self.config.output_dir;
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(dir.join(name))
    }

    /// CSV preceded by `#` lines carrying the command, versions, config and
    /// hashes; the content hash covers the CSV body only.
    pub fn csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> Result<(), CliError> {
        let path = self.path(name)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Io { path: path.clone(), reason: e.to_string() })?;
        }
        let body = w.into_inner().map_err(|e| CliError::Io { path: path.clone(), reason: e.to_string() })?;
        let mut out = String::new();
        out.push_str(&format!("# command: {}\n", self.command));
        out.push_str(&format!("# version: maryland {VERSION}\n"));
        out.push_str(&format!("# precision_bits: {}\n", self.config.precision_bits));
        out.push_str(&format!("# config: {}\n", self.config.to_json()));
        out.push_str(&format!("# config_sha256: {}\n", self.config.hash()));
        out.push_str(&format!("# content_sha256: {}\n", sha256_hex(&body)));
        let mut bytes = out.into_bytes();
        bytes.extend_from_slice(&body);
        std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, result: &T) -> Result<(), CliError> {
        let path = self.path(name)?;
        let result = serde_json::to_value(result).map_err(|e| CliError::Io { path: path.clone(), reason: e.to_string() })?;
        let doc = json!({
            "command": self.command,
            "version": format!("maryland {VERSION}"),
            "precision_bits": self.config.precision_bits,
            "config": self.config,
            "config_sha256": self.config.hash(),
            "content_sha256": sha256_hex(result.to_string().as_bytes()),
            "result": result,
        });
        let text = serde_json::to_string_pretty(&doc).expect("json value") + "\n";
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        self.written.push(path);
        Ok(())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io { path: path.to_path_buf(), reason: e.to_string() }
}
