use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::dataio::{load_sequence, DatasetManifest, SyntheticCorpus};
use crate::error::{Error, Result};
use crate::features::{extract_sample, FeatureSample};
use crate::pipeline::general_skin_model;

/// Full-layout feature samples of a data set with their fold bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub vocabulary: Vec<String>,
    pub samples: Vec<FeatureSample>,
    /// Repetition index of each sample within its (signer, label) pair.
    pub repetitions: Vec<usize>,
}

impl Corpus {
    pub fn new(vocabulary: Vec<String>, samples: Vec<FeatureSample>) -> Result<Self> {
        let mut counts = std::collections::HashMap::new();
        let mut repetitions = Vec::with_capacity(samples.len());
        for s in &samples {
            if !vocabulary.contains(&s.label) {
                return Err(Error::InvalidInput(format!("label `{}` is not in the vocabulary", s.label)));
            }
            let c = counts.entry((s.signer.clone(), s.label.clone())).or_insert(0usize);
            repetitions.push(*c);
            *c += 1;
        }
        Ok(Self {
            vocabulary,
            samples,
            repetitions,
        })
    }

    /// Signers in order of first appearance.
    pub fn signers(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.samples {
            if !out.contains(&s.signer) {
                out.push(s.signer.clone());
            }
        }
        out
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.vocabulary.iter().position(|v| v == label)
    }

    /// Writes one feature file per sample plus an index.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut index = String::from("#vocabulary");
        for v in &self.vocabulary {
            index.push('\t');
            index.push_str(v);
        }
        index.push('\n');
        for (i, s) in self.samples.iter().enumerate() {
            let name = format!("sample_{i:05}.feat");
            s.save(&dir.join(&name))?;
            index.push_str(&name);
            index.push('\n');
        }
        let path = dir.join("index.tsv");
        std::fs::write(&path, index).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("index.tsv");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines();
        let vocabulary: Vec<String> = lines
            .next()
            .and_then(|l| l.strip_prefix("#vocabulary"))
            .ok_or_else(|| Error::format(&path, "missing #vocabulary line"))?
            .split('\t')
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        let samples = lines
            .filter(|l| !l.trim().is_empty())
            .map(|name| FeatureSample::load(&dir.join(name.trim())))
            .collect::<Result<Vec<_>>>()?;
        Self::new(vocabulary, samples)
    }
}

/// Hex SHA-256 over length-prefixed parts.
pub fn cache_key(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn cached(cache: Option<&Path>, key: &str, compute: impl FnOnce() -> Result<FeatureSample>) -> Result<FeatureSample> {
    let Some(dir) = cache else {
        return compute();
    };
    let path = dir.join(format!("{key}.feat"));
    if path.exists() {
        match FeatureSample::load(&path) {
            Ok(s) => return Ok(s),
            Err(e) => log::warn!("ignoring unreadable cache entry {}: {e}", path.display()),
        }
    }
    let sample = compute()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    // Write then rename so a concurrent reader never sees a partial file.
    let tmp = dir.join(format!("{key}.tmp{}", std::process::id()));
    sample.save(&tmp)?;
    std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(sample)
}

/// Renders and describes every sample of a synthetic corpus.
pub fn extract_synthetic(corpus: &SyntheticCorpus, cfg: &Config, cache: Option<&Path>) -> Result<Corpus> {
    let general = general_skin_model(cfg.segmentation.bins);
    let spec_text = format!("{:?}", corpus.spec);
    let cfg_text = cfg.to_kv();
    let samples = (0..corpus.len())
        .into_par_iter()
        .map(|i| {
            let key = cache_key(&[
                b"synthetic",
                spec_text.as_bytes(),
                &corpus.seed.to_le_bytes(),
                &(i as u64).to_le_bytes(),
                cfg_text.as_bytes(),
            ]);
            cached(cache, &key, || extract_sample(&corpus.render(i).sequence, &general, cfg))
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(corpus.manifest.vocabulary.clone(), samples)
}

fn hash_dir(dir: &Path) -> Result<Vec<u8>> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    names.sort();
    let mut h = Sha256::new();
    for p in names {
        h.update(p.file_name().unwrap_or_default().as_encoded_bytes());
        let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().to_vec())
}

/// Loads and describes every recording listed in a manifest file.
pub fn extract_manifest(manifest_path: &Path, cfg: &Config, cache: Option<&Path>) -> Result<Corpus> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let general = general_skin_model(cfg.segmentation.bins);
    let cfg_text = cfg.to_kv();
    let samples = manifest
        .entries
        .par_iter()
        .map(|e| {
            let dir = root.join(&e.path);
            let key = cache_key(&[
                b"recording",
                &hash_dir(&dir)?,
                e.signer.as_bytes(),
                e.label.as_bytes(),
                e.handedness.to_string().as_bytes(),
                cfg_text.as_bytes(),
            ]);
            cached(cache, &key, || {
                let mut seq = load_sequence(&dir)?;
                seq.signer_id = e.signer.clone();
                seq.sign_label = Some(e.label.clone());
                seq.handedness = e.handedness;
                extract_sample(&seq, &general, cfg)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(manifest.vocabulary, samples)
}
