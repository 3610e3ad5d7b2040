//! Provenance headers and atomic artifact writes.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{sha256_hex, Source};

pub const TOOL: &str = "mdclock";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything an artifact needs to be reproduced: the command, the effective
/// configuration and the digests of its inputs.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub command: String,
    pub config: Value,
    pub config_sha256: String,
    pub sources: Vec<Source>,
}

impl Provenance {
    pub fn new(command: &str, config: Value, sources: Vec<Source>) -> Self {
        // serde_json sorts object keys, so the serialization is canonical
        let canonical = serde_json::to_string(&json!({ "command": command, "config": config })).expect("json value");
        Provenance {
            command: command.into(),
            config,
            config_sha256: sha256_hex(canonical.as_bytes()),
            sources,
        }
    }

    /// `#`-prefixed header block for CSV and text artifacts.
    pub fn header(&self) -> String {
        let mut s = format!("# {TOOL} {VERSION}\n# command: {}\n# config_sha256: {}\n", self.command, self.config_sha256);
        for src in &self.sources {
            s.push_str(&format!("# input {}: {} sha256={}\n", src.name, src.origin, src.sha256));
        }
        s.push_str(&format!("# config: {}\n", serde_json::to_string(&self.config).expect("json value")));
        s
    }

    /// Machine-readable record wrapping `result`.
    pub fn record(&self, result: Value) -> String {
        let v = json!({
            "tool": TOOL,
            "version": VERSION,
            "command": self.command,
            "config_sha256": self.config_sha256,
            "inputs": self.sources,
            "config": self.config,
            "result": result,
        });
        let mut s = serde_json::to_string_pretty(&v).expect("json value");
        s.push('\n');
        s
    }
}

/// Writes to `path` through a sibling temporary file and a rename, or to stdout.
pub fn emit(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        None => {
            let mut out = io::stdout().lock();
            out.write_all(content.as_bytes())?;
            out.flush()?;
            Ok(())
        }
        Some(p) => write_atomic(p, content),
    }
}

pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let name = path
        .file_name()
        .with_context(|| format!("{} is not a file path", path.display()))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(content.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.with_context(|| format!("writing {}", path.display()))
}

/// Shortest round-trip representation, so repeated runs are byte-identical.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if !x.is_finite() {
        "nan".into()
    } else if a == 0.0 || (1e-4..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}
