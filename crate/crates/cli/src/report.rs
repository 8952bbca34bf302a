//! Writing result files. Every artifact carries the effective configuration:
//! JSON files in a top-level `config` field, CSV files in a leading
//! `# config: {...}` comment line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use icc_core::Error;

pub struct Reporter {
    dir: PathBuf,
    config: Value,
    written: Vec<PathBuf>,
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl Reporter {
    pub fn new(dir: &Path, config: Value) -> Result<Self, Error> {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            config,
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Error> {
        let path = self.dir.join(name);
        let mut file = fs::File::create(&path).map_err(|e| io_error(&path, e))?;
        file.write_all(bytes).map_err(|e| io_error(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    /// Writes `{"config": ..., <body fields>}`; a non-object body goes under `result`.
    pub fn json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<(), Error> {
        let text = with_config(&self.config, body)?;
        self.write(name, text.as_bytes())
    }

    pub fn csv(&mut self, name: &str, header: &str, rows: impl IntoIterator<Item = String>) -> Result<(), Error> {
        let mut text = format!("# config: {}\n{header}\n", serde_json::to_string(&self.config)?);
        for row in rows {
            text.push_str(&row);
            text.push('\n');
        }
        self.write(name, text.as_bytes())
    }

    pub fn raw(&mut self, name: &str, bytes: &[u8]) -> Result<(), Error> {
        self.write(name, bytes)
    }
}

/// Pretty JSON object holding `config` next to the fields of `body`.
pub fn with_config<T: Serialize>(config: &Value, body: &T) -> Result<String, Error> {
    let mut out = serde_json::Map::new();
    out.insert("config".into(), config.clone());
    match serde_json::to_value(body)? {
        Value::Object(fields) => out.extend(fields),
        other => {
            out.insert("result".into(), other);
        }
    }
    let mut text = serde_json::to_string_pretty(&Value::Object(out))?;
    text.push('\n');
    Ok(text)
}

/// Fixed-precision float formatting so CSV output is stable.
pub fn f(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.10}")
    } else {
        "NA".to_string()
    }
}
