//! `path,label[,tags]` manifests.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::DatasetError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: String,
    /// Free-form annotations such as the bitrate or rate-control mode,
    /// separated by `;` in the file.
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Sorted distinct labels; a label's index is its class index.
    pub classes: Vec<String>,
}

impl Manifest {
    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.binary_search_by(|c| c.as_str().cmp(label)).ok()
    }

    /// Relative paths joined onto `base`.
    pub fn resolve(mut self, base: &Path) -> Self {
        for e in &mut self.entries {
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
        }
        self
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ManifestOptions {
    /// Rejects labels with fewer clips than this.
    pub min_clips: Option<usize>,
}

pub fn load_manifest(path: impl AsRef<Path>, opts: ManifestOptions) -> Result<Manifest, DatasetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let manifest = parse_manifest(&text, opts)?;
    Ok(manifest.resolve(path.parent().unwrap_or(Path::new("."))))
}

pub fn parse_manifest(text: &str, opts: ManifestOptions) -> Result<Manifest, DatasetError> {
    let parse_err = |line: usize, message: String| DatasetError::Parse { line, message };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(parse_err(1, "no header".into())),
        Some(r) => r.map_err(|e| parse_err(1, e.to_string()))?,
    };
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 2 || cols[0] != "path" || cols[1] != "label" || (cols.len() == 3 && cols[2] != "tags") || cols.len() > 3 {
        return Err(parse_err(1, format!("expected header path,label[,tags], found {}", cols.join(","))));
    }

    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for record in records {
        let record = record.map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() < 2 || record.len() > cols.len() {
            return Err(parse_err(line, format!("expected {} fields, found {}", cols.len(), record.len())));
        }
        let (p, label) = (&record[0], &record[1]);
        if p.is_empty() {
            return Err(parse_err(line, "empty path".into()));
        }
        if label.is_empty() {
            return Err(parse_err(line, "empty label".into()));
        }
        if !seen.insert(p.to_string()) {
            return Err(DatasetError::DuplicatePath(p.to_string()));
        }
        let tags = record
            .get(2)
            .map(|t| t.split(';').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect())
            .unwrap_or_default();
        entries.push(ManifestEntry {
            path: PathBuf::from(p),
            label: label.to_string(),
            tags,
        });
    }

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &entries {
        *counts.entry(&e.label).or_default() += 1;
    }
    if let Some(min) = opts.min_clips {
        if let Some((label, &n)) = counts.iter().find(|(_, &n)| n < min) {
            return Err(DatasetError::UnknownLabel {
                label: label.to_string(),
                clips: n,
                min_clips: min,
            });
        }
    }
    let classes: BTreeSet<String> = entries.iter().map(|e| e.label.clone()).collect();
    Ok(Manifest {
        entries,
        classes: classes.into_iter().collect(),
    })
}
