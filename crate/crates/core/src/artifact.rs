//! Output files: CSV tables with `#` metadata lines, JSON documents with a
//! metadata block, and output-directory handling.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::TOOL_VERSION;

/// Provenance attached to every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub config_hash: String,
    pub tool_version: String,
    /// Further key/value pairs, kept in insertion order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra: Vec<(String, String)>,
}

impl ArtifactMeta {
    pub fn new(config_hash: impl Into<String>) -> Self {
        Self {
            config_hash: config_hash.into(),
            tool_version: TOOL_VERSION.into(),
            extra: Vec::new(),
        }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.extra.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        match key {
            "config_hash" => Some(&self.config_hash),
            "tool_version" => Some(&self.tool_version),
            _ => self.extra.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str()),
        }
    }

    fn lines(&self) -> Vec<(String, String)> {
        let mut v = vec![
            ("config_hash".to_string(), self.config_hash.clone()),
            ("tool_version".to_string(), self.tool_version.clone()),
        ];
        v.extend(self.extra.iter().cloned());
        v
    }

    fn from_lines(lines: Vec<(String, String)>) -> Result<Self> {
        let mut config_hash = None;
        let mut tool_version = None;
        let mut extra = Vec::new();
        for (k, v) in lines {
            match k.as_str() {
                "config_hash" => config_hash = Some(v),
                "tool_version" => tool_version = Some(v),
                _ => extra.push((k, v)),
            }
        }
        Ok(Self {
            config_hash: config_hash.ok_or_else(|| Error::InvalidInput("artifact lacks config_hash".into()))?,
            tool_version: tool_version.ok_or_else(|| Error::InvalidInput("artifact lacks tool_version".into()))?,
            extra,
        })
    }
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .map_err(|e| Error::io(path, e))
}

/// Writes `# key: value` lines followed by a headed CSV table. Never overwrites.
pub fn write_csv<S: Serialize>(path: &Path, meta: &ArtifactMeta, rows: &[S]) -> Result<()> {
    let mut f = create(path)?;
    for (k, v) in meta.lines() {
        writeln!(f, "# {k}: {v}").map_err(|e| Error::io(path, e))?;
    }
    let mut w = csv::Writer::from_writer(f);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_csv<D: DeserializeOwned>(path: &Path) -> Result<(ArtifactMeta, Vec<D>)> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut meta = Vec::new();
    for line in BufReader::new(&f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let Some(rest) = line.strip_prefix("# ") else { break };
        if let Some((k, v)) = rest.split_once(": ") {
            meta.push((k.to_string(), v.to_string()));
        }
    }
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<D>, _>>()?;
    Ok((ArtifactMeta::from_lines(meta)?, rows))
}

#[derive(Serialize, Deserialize)]
struct Document<T> {
    meta: ArtifactMeta,
    data: T,
}

/// Writes `{"meta": …, "data": …}`. Never overwrites.
pub fn write_json<S: Serialize>(path: &Path, meta: &ArtifactMeta, data: &S) -> Result<()> {
    let mut f = create(path)?;
    let text = serde_json::to_string_pretty(&Document { meta: meta.clone(), data })?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.write_all(b"\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<(ArtifactMeta, D)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: Document<D> = serde_json::from_str(&text)?;
    Ok((doc.meta, doc.data))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Makes `dir` ready for fresh output. A non-empty directory is an error
/// unless `force` is set, in which case it is removed and recreated.
pub fn prepare_output_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_some();
        if non_empty {
            if !force {
                return Err(Error::OutputExists(dir.to_path_buf()));
            }
            fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Row {
        a: u32,
        b: f64,
        c: String,
    }

    #[test]
    fn csv_round_trip_keeps_meta_and_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let meta = ArtifactMeta::new("abc").with("band_direction", 10.0);
        let rows = vec![
            Row { a: 1, b: 0.1 + 0.2, c: "x".into() },
            Row { a: 2, b: -1e-300, c: "y, z".into() },
        ];
        write_csv(&p, &meta, &rows).unwrap();
        let (m, back): (_, Vec<Row>) = read_csv(&p).unwrap();
        assert_eq!(m, meta);
        assert_eq!(back, rows);
        assert_eq!(m.get("band_direction"), Some("10"));
        assert!(write_csv(&p, &meta, &rows).is_err());
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.json");
        write_json(&p, &ArtifactMeta::new("h"), &vec![1.5f64, 0.1]).unwrap();
        let (m, v): (_, Vec<f64>) = read_json(&p).unwrap();
        assert_eq!(m.config_hash, "h");
        assert_eq!(v, vec![1.5, 0.1]);
    }

    #[test]
    fn non_empty_output_requires_force() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        prepare_output_dir(&out, false).unwrap();
        prepare_output_dir(&out, false).unwrap();
        fs::write(out.join("f"), "x").unwrap();
        assert!(matches!(prepare_output_dir(&out, false), Err(Error::OutputExists(_))));
        prepare_output_dir(&out, true).unwrap();
        assert!(fs::read_dir(&out).unwrap().next().is_none());
    }
}
