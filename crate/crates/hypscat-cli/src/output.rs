//! Artifact writing: fixed-precision JSON, provenance headers, atomic files.

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Config hash and versions carried by every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub cli_version: &'static str,
    pub library_version: &'static str,
    pub config_hash: String,
    pub task: String,
}

impl Provenance {
    pub fn new(config_hash: &str, task: &str) -> Self {
        Self {
            tool: "hypscat",
            cli_version: env!("CARGO_PKG_VERSION"),
            library_version: hypscat::VERSION,
            config_hash: config_hash.to_string(),
            task: task.to_string(),
        }
    }

    fn line(&self) -> String {
        format!(
            "hypscat {} (library {}) task={} config={}",
            self.cli_version, self.library_version, self.task, self.config_hash
        )
    }

    pub fn csv_header(&self) -> String {
        format!("# {}\n", self.line())
    }

    pub fn svg_comment(&self) -> String {
        format!("<!-- {} -->\n", self.line())
    }
}

/// JSON with every float written to 17 significant digits.
pub fn to_json_17(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value, 0);
    out.push('\n');
    out
}

fn write_value(out: &mut String, v: &Value, depth: usize) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                match n.as_f64() {
                    Some(x) if x.is_finite() => {
                        let _ = write!(out, "{x:.16e}");
                    }
                    _ => out.push_str("null"),
                }
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            // short numeric arrays such as complex pairs stay on one line
            let flat = items.iter().all(|x| !x.is_array() && !x.is_object()) && items.len() <= 4;
            out.push('[');
            for (i, x) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                if !flat {
                    newline(out, depth + 1);
                }
                write_value(out, x, depth + 1);
            }
            if !flat && !items.is_empty() {
                newline(out, depth);
            }
            out.push(']');
        }
        Value::Object(map) => write_object(out, map, depth),
    }
}

fn write_object(out: &mut String, map: &Map<String, Value>, depth: usize) {
    out.push('{');
    for (i, (k, x)) in map.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        newline(out, depth + 1);
        out.push_str(&Value::String(k.clone()).to_string());
        out.push_str(": ");
        write_value(out, x, depth + 1);
    }
    if !map.is_empty() {
        newline(out, depth);
    }
    out.push('}');
}

fn newline(out: &mut String, depth: usize) {
    out.push('\n');
    for _ in 0..depth {
        out.push_str("  ");
    }
}

/// Writes through a temporary sibling and renames it into place.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Artifacts collected during a run and written only once the run succeeds.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    pub provenance: Provenance,
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn new(dir: PathBuf, provenance: Provenance) -> Self {
        Self { dir, provenance, files: Vec::new() }
    }

    /// JSON document with the provenance block under `provenance`.
    pub fn json(&mut self, name: &str, body: Value) -> Result<(), CliError> {
        let mut map = Map::new();
        map.insert("provenance".into(), serde_json::to_value(&self.provenance)?);
        match body {
            Value::Object(m) => map.extend(m),
            other => {
                map.insert("data".into(), other);
            }
        }
        self.files.push((name.to_string(), to_json_17(&Value::Object(map)).into_bytes()));
        Ok(())
    }

    pub fn csv(&mut self, name: &str, body: &str) {
        let text = self.provenance.csv_header() + body;
        self.files.push((name.to_string(), text.into_bytes()));
    }

    /// SVG with the provenance comment after the opening tag.
    pub fn svg(&mut self, name: &str, body: &str) {
        let text = match body.find('>') {
            Some(i) => format!("{}\n{}{}", &body[..=i], self.provenance.svg_comment(), body[i + 1..].trim_start_matches('\n')),
            None => body.to_string(),
        };
        self.files.push((name.to_string(), text.into_bytes()));
    }

    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            atomic_write(&path, bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_carry_17_digits() {
        let text = to_json_17(&json!({"x": 0.1, "n": 3, "z": [1.0, -2.5]}));
        assert!(text.contains("1.0000000000000001e-1"));
        assert!(text.contains("\"n\": 3"));
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["x"].as_f64(), Some(0.1));
        assert_eq!(back["z"][1].as_f64(), Some(-2.5));
    }

    #[test]
    fn non_finite_becomes_null() {
        assert_eq!(to_json_17(&json!([f64::NAN])).trim(), "[null]");
    }

    #[test]
    fn hash_is_hex_sha256() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn svg_comment_follows_root() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::new(dir.path().to_path_buf(), Provenance::new("abc", "t"));
        a.svg("p.svg", "<svg a=\"1\">\n<rect/>\n</svg>\n");
        let paths = a.commit().unwrap();
        let text = fs::read_to_string(&paths[0]).unwrap();
        assert!(text.starts_with("<svg a=\"1\">\n<!-- hypscat"));
        assert!(text.contains("config=abc"));
    }
}
