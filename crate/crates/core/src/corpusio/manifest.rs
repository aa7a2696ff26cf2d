use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_text, write_bytes};
use crate::error::{Error, Result};

/// One clip of a corpus or subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipEntry {
    pub clip_id: String,
    pub feature_path: String,
    pub duration_s: f64,
    pub language: String,
    #[serde(default)]
    pub source_sample_ids: Vec<String>,
}

/// Ordered list of clips with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClipManifest {
    entries: Vec<ClipEntry>,
}

impl ClipManifest {
    /// Builds a manifest, checking id uniqueness and durations.
    pub fn new(entries: Vec<ClipEntry>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            validate_entry(e).map_err(|m| Error::parse("manifest", i + 1, m))?;
            if !seen.insert(e.clip_id.as_str()) {
                return Err(Error::DuplicateClip {
                    clip_id: e.clip_id.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ClipEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, clip_id: &str) -> Option<&ClipEntry> {
        self.entries.iter().find(|e| e.clip_id == clip_id)
    }

    pub fn total_duration(&self) -> f64 {
        self.entries.iter().map(|e| e.duration_s).sum()
    }

    pub fn into_entries(self) -> Vec<ClipEntry> {
        self.entries
    }

    /// JSON-lines rendering, one object per entry, trailing newline.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            // ClipEntry only holds strings and finite floats.
            out.push_str(&serde_json::to_string(e).expect("clip entry serializes"));
            out.push('\n');
        }
        out
    }
}

fn validate_entry(e: &ClipEntry) -> std::result::Result<(), String> {
    if e.clip_id.is_empty() {
        return Err("empty clip_id".into());
    }
    if e.clip_id.contains(['\t', '\n', '\r']) {
        return Err(format!("clip_id {:?} contains a tab or newline", e.clip_id));
    }
    if !e.duration_s.is_finite() || e.duration_s < 0.0 {
        return Err(format!("invalid duration_s {}", e.duration_s));
    }
    Ok(())
}

/// Parses JSON-lines manifest text. Blank lines are skipped; errors carry
/// the 1-based line number.
pub fn parse_manifest(text: &str) -> Result<ClipManifest> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ClipEntry = serde_json::from_str(line)
            .map_err(|e| Error::parse("manifest", line_no, e.to_string()))?;
        validate_entry(&entry).map_err(|m| Error::parse("manifest", line_no, m))?;
        if !seen.insert(entry.clip_id.clone()) {
            return Err(Error::DuplicateClip {
                clip_id: entry.clip_id,
                line: line_no,
            });
        }
        entries.push(entry);
    }
    Ok(ClipManifest { entries })
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<ClipManifest> {
    parse_manifest(&read_text(path.as_ref())?)
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &ClipManifest) -> Result<()> {
    write_bytes(path.as_ref(), manifest.to_jsonl().as_bytes())
}
