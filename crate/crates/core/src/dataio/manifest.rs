use std::collections::HashSet;
use std::path::{Path, PathBuf};

use super::{validate_id, Handedness};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Sequence directory, relative to the manifest file.
    pub path: PathBuf,
    pub signer: String,
    pub label: String,
    pub handedness: Handedness,
}

/// Tab-separated listing of recordings: `path signer label handedness`.
///
/// An optional first line `#vocabulary<TAB>a<TAB>b...` fixes the class order;
/// otherwise labels are ordered by first appearance.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub vocabulary: Vec<String>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let vocab: HashSet<&str> = self.vocabulary.iter().map(String::as_str).collect();
        if vocab.len() != self.vocabulary.len() {
            return Err(Error::InvalidInput("duplicate vocabulary entry".into()));
        }
        let mut paths = HashSet::new();
        for e in &self.entries {
            if !vocab.contains(e.label.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "label `{}` is not in the vocabulary",
                    e.label
                )));
            }
            if !paths.insert(&e.path) {
                return Err(Error::InvalidInput(format!(
                    "duplicate path {}",
                    e.path.display()
                )));
            }
            validate_id(&e.signer)?;
            validate_id(&e.label)?;
        }
        Ok(())
    }

    pub fn signers(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for e in &self.entries {
            if !seen.contains(&e.signer) {
                seen.push(e.signer.clone());
            }
        }
        seen
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("#vocabulary");
        for v in &self.vocabulary {
            out.push('\t');
            out.push_str(v);
        }
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.path.display(),
                e.signer,
                e.label,
                e.handedness
            ));
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut manifest = DatasetManifest::default();
        let mut explicit_vocab = false;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#vocabulary") {
                manifest.vocabulary = rest.split('\t').filter(|s| !s.is_empty()).map(String::from).collect();
                explicit_vocab = true;
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::format(
                    origin,
                    format!("line {}: expected 4 tab-separated fields", lineno + 1),
                ));
            }
            let handedness = fields[3]
                .parse()
                .map_err(|e: Error| Error::format(origin, format!("line {}: {e}", lineno + 1)))?;
            let entry = ManifestEntry {
                path: PathBuf::from(fields[0]),
                signer: fields[1].to_string(),
                label: fields[2].to_string(),
                handedness,
            };
            if !explicit_vocab && !manifest.vocabulary.contains(&entry.label) {
                manifest.vocabulary.push(entry.label.clone());
            }
            manifest.entries.push(entry);
        }
        manifest
            .validate()
            .map_err(|e| Error::format(origin, e.to_string()))?;
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Index of each entry among entries sharing its (signer, label).
    pub fn repetition_indices(&self) -> Vec<usize> {
        let mut counts = std::collections::HashMap::new();
        self.entries
            .iter()
            .map(|e| {
                let c = counts.entry((&e.signer, &e.label)).or_insert(0usize);
                *c += 1;
                *c - 1
            })
            .collect()
    }
}
