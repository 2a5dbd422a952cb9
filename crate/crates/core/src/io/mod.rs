//! File formats. Streams are JSON Lines whose first line is a header
//! carrying the format version and file kind; tables are CSV with fixed
//! headers; graphs are GraphML and DOT. Every writer is deterministic and
//! every write is atomic (temporary file, then rename).

pub mod corpus;
pub mod graph;
pub mod streams;
pub mod tables;

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::domain::StreamMeta;
use crate::error::{Error, Result};

pub use corpus::{read_corpus, write_corpus};
pub use graph::{read_graphml, to_dot, to_graphml};
pub use streams::{
    read_all_frames, read_events, read_frames, read_ground_truth, read_model, read_trajectories, read_tracks, read_windows,
    write_events, write_frames, write_ground_truth, write_model, write_trajectories, write_tracks,
    write_windows, FrameReader,
};
pub use tables::{
    read_features, read_samples, write_ablation, write_baseline, write_classification, write_features,
    write_predictions, write_samples, write_sensitivity, write_sweep, SampleRow,
};

pub const FORMAT_VERSION: &str = "herdgraph/1";

/// Shortest decimal that round-trips the value after rounding to 9
/// significant digits.
pub fn fmt9(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("scientific notation parses");
    format!("{rounded}")
}

/// Writes `bytes` to `path` through a sibling temporary file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<StreamMeta>,
}

impl Header {
    pub fn new(kind: &str, meta: Option<StreamMeta>) -> Self {
        Header {
            format: FORMAT_VERSION.to_string(),
            kind: kind.to_string(),
            meta,
        }
    }
}

/// Checks the version before anything else so that future formats fail
/// with `UnknownVersion` rather than a schema error.
fn parse_header(line: &str, line_no: usize, kind: &str) -> Result<Header> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::parse(line_no, e))?;
    match value.get("format").and_then(|f| f.as_str()) {
        Some(FORMAT_VERSION) => {}
        Some(other) => return Err(Error::UnknownVersion(other.to_string())),
        None => return Err(Error::schema(line_no, "format", "header lacks a format version")),
    }
    let header: Header = serde_json::from_value(value).map_err(|e| Error::parse(line_no, e))?;
    if header.kind != kind {
        return Err(Error::schema(
            line_no,
            "kind",
            format!("expected `{kind}`, found `{}`", header.kind),
        ));
    }
    if let Some(meta) = &header.meta {
        meta.validate().map_err(|e| Error::schema(line_no, "meta", e.to_string()))?;
    }
    Ok(header)
}

/// Header line plus one compact JSON value per line.
fn jsonl_bytes<T: Serialize>(header: &Header, items: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec(header).map_err(|e| Error::Config(e.to_string()))?;
    out.push(b'\n');
    for item in items {
        serde_json::to_writer(&mut out, &item).map_err(|e| Error::Config(e.to_string()))?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Line-numbered reader over a JSON Lines body; blank lines are skipped.
pub struct JsonLines<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> JsonLines<R> {
    fn open(reader: R, kind: &str) -> Result<(Header, Self)> {
        let mut lines = reader.lines();
        let first = lines.next().ok_or_else(|| Error::parse(1, "missing header line"))??;
        let header = parse_header(&first, 1, kind)?;
        Ok((header, JsonLines { lines, line_no: 1 }))
    }

    /// Next non-blank line and its 1-based number.
    fn next_line(&mut self) -> Option<Result<(usize, String)>> {
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            match line {
                Err(e) => return Some(Err(e.into())),
                Ok(l) if l.trim().is_empty() => continue,
                Ok(l) => return Some(Ok((self.line_no, l))),
            }
        }
    }

    fn next_value<T: DeserializeOwned>(&mut self) -> Option<Result<(usize, T)>> {
        Some(self.next_line()?.and_then(|(n, l)| {
            serde_json::from_str(&l).map(|v| (n, v)).map_err(|e| Error::parse(n, e))
        }))
    }

    fn collect_values<T: DeserializeOwned>(mut self) -> Result<Vec<T>> {
        let mut out = Vec::new();
        while let Some(v) = self.next_value::<T>() {
            out.push(v?.1);
        }
        Ok(out)
    }
}

fn open_file(path: &Path) -> Result<BufReader<File>> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingFile(path.to_path_buf())),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Frames,
    GroundTruth,
    Tracks,
    Trajectories,
    Windows,
    Features,
    Labels,
    Predictions,
    Events,
    Model,
    Graph,
    Report,
    Corpus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub role: Role,
    /// Relative to the manifest's directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<StreamMeta>,
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(meta: Option<StreamMeta>) -> Self {
        Manifest {
            format_version: FORMAT_VERSION.to_string(),
            meta,
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, role: Role, path: impl Into<String>) {
        self.files.push(ManifestEntry {
            role,
            path: path.into(),
        });
    }

    pub fn paths(&self, role: Role) -> impl Iterator<Item = &str> {
        self.files.iter().filter(move |f| f.role == role).map(|f| f.path.as_str())
    }

    /// Entries sorted by role then path.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut sorted = self.clone();
        sorted.files.sort_by(|a, b| (a.role, &a.path).cmp(&(b.role, &b.path)));
        write_json(path, &sorted)
    }

    /// Loads and checks the version and that every listed file exists.
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => e.into(),
        })?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::parse(e.line(), e))?;
        match value.get("format_version").and_then(|v| v.as_str()) {
            Some(FORMAT_VERSION) => {}
            Some(other) => return Err(Error::UnknownVersion(other.to_string())),
            None => return Err(Error::schema(1, "format_version", "missing")),
        }
        let m: Manifest = serde_json::from_value(value).map_err(|e| Error::schema(1, "manifest", e.to_string()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for f in &m.files {
            let p = dir.join(&f.path);
            if !p.exists() {
                return Err(Error::MissingFile(p));
            }
        }
        Ok(m)
    }

    pub fn resolve(manifest_path: &Path, entry: &str) -> PathBuf {
        manifest_path.parent().unwrap_or(Path::new(".")).join(entry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt9(0.1), "0.1");
        assert_eq!(fmt9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt9(2.0 / 3.0), "0.666666667");
        assert_eq!(fmt9(123456789012.0), "123456789000");
        assert_eq!(fmt9(-0.000123456789123), "-0.000123456789");
        assert_eq!(fmt9(0.0), "0");
        assert_eq!(fmt9(4.0), "4");
    }

    #[test]
    fn manifest_checks_version_and_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.jsonl"), "x").unwrap();
        let mut m = Manifest::new(None);
        m.add(Role::Frames, "a.jsonl");
        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        assert_eq!(Manifest::load(&path).unwrap(), m);

        m.add(Role::Model, "missing.json");
        m.save(&path).unwrap();
        assert!(matches!(Manifest::load(&path), Err(Error::MissingFile(_))));

        let bumped = std::fs::read_to_string(&path).unwrap().replace(FORMAT_VERSION, "herdgraph/2");
        std::fs::write(&path, bumped).unwrap();
        assert!(matches!(Manifest::load(&path), Err(Error::UnknownVersion(v)) if v == "herdgraph/2"));
    }

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("f.txt");
        write_atomic(&p, b"first version, longer").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "second");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
