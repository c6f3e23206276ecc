//! Tunable parameters for every stage, with a flat `section.key=value` text
//! form used by the command line and report snapshots.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    /// Histogram bins per chromaticity axis.
    pub bins: usize,
    /// Weight of the current frame in the adaptive skin model update.
    pub alpha: f64,
    /// Skin/non-skin likelihood ratio threshold.
    pub skin_threshold: f64,
    /// Gray-level difference threshold for the motion mask.
    pub motion_threshold: u8,
    /// Minimum depth in front of the face model for a hand pixel (mm).
    pub face_depth_threshold: f64,
    /// Blend rate of the face depth model towards the current frame.
    pub face_update_rate: f64,
    /// Minimum component area in pixels.
    pub min_area: usize,
    pub weight_depth: f64,
    pub weight_size: f64,
    pub weight_proximity: f64,
    /// Blobs scoring below this are not assigned.
    pub min_score: f64,
    /// Depth difference (mm) at which the depth score reaches zero.
    pub depth_scale: f64,
    /// Body region: pixels at most this far behind the torso joint (mm).
    pub body_behind: f64,
    /// Body region: pixels at most this far in front of the torso joint (mm).
    pub body_front: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            bins: 32,
            alpha: 0.2,
            skin_threshold: 1.0,
            motion_threshold: 12,
            face_depth_threshold: 60.0,
            face_update_rate: 0.5,
            min_area: 30,
            weight_depth: 1.0 / 3.0,
            weight_size: 1.0 / 3.0,
            weight_proximity: 1.0 / 3.0,
            min_score: 0.35,
            depth_scale: 500.0,
            body_behind: 300.0,
            body_front: 1200.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingConfig {
    pub process_noise: f64,
    pub measurement_noise: f64,
    pub initial_covariance: f64,
    pub pad_fraction: f64,
    /// Smallest window padding, in shoulder widths.
    pub min_pad: f64,
    /// Frames without a measurement before the track is re-seeded.
    pub max_coast: u32,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            process_noise: 1e-2,
            measurement_noise: 4.0,
            initial_covariance: 1e3,
            pad_fraction: 0.25,
            min_pad: 0.15,
            max_coast: 15,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eccentricity {
    /// `|1 - m/M|`.
    AsPrinted,
    /// `sqrt(1 - (m/M)^2)`.
    Standard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub eccentricity: Eccentricity,
    pub zero_idle_hand: bool,
    /// Idle if total path length is below this many shoulder widths...
    pub idle_path: f64,
    /// ...and mean speed is below this many shoulder widths per frame.
    pub idle_speed: f64,
    pub shoulder_frames: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            eccentricity: Eccentricity::AsPrinted,
            zero_idle_hand: true,
            idle_path: 0.5,
            idle_speed: 0.02,
            shoulder_frames: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaConfig {
    pub dims: usize,
    /// Frames kept after resampling to three times this length.
    pub retained_frames: usize,
    pub shrinkage: f64,
    pub shrinkage_max: f64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self {
            dims: 20,
            retained_frames: 15,
            shrinkage: 1e-3,
            shrinkage_max: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// A sequence may end in any emitting state.
    AnyState,
    /// A sequence must leave through the exit state.
    Exit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmmConfig {
    pub states: usize,
    pub self_prob: f64,
    pub variance_floor: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub termination: Termination,
}

impl Default for HmmConfig {
    fn default() -> Self {
        Self {
            states: 7,
            self_prob: 0.6,
            variance_floor: 1e-4,
            tol: 1e-4,
            max_iter: 40,
            termination: Termination::AnyState,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub segmentation: SegmentationConfig,
    pub tracking: TrackingConfig,
    pub features: FeatureConfig,
    pub lda: LdaConfig,
    pub hmm: HmmConfig,
}

impl Config {
    /// One `section.key=value` line per parameter, sorted by key.
    pub fn to_kv(&self) -> String {
        let value = serde_json::to_value(self).expect("config serialises");
        let mut out = String::new();
        flatten("", &value, &mut out);
        out
    }

    /// Parses `key=value` lines over the defaults. Blank lines and `#`
    /// comments are ignored; unknown keys are errors.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut value = serde_json::to_value(Config::default()).expect("config serialises");
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            let (key, raw) = (key.trim(), raw.trim());
            let slot = key
                .split('.')
                .try_fold(&mut value, |v, part| v.get_mut(part))
                .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
            *slot = match slot {
                Value::Bool(_) => Value::Bool(
                    raw.parse()
                        .map_err(|_| Error::Config(format!("`{key}`: expected bool")))?,
                ),
                Value::Number(_) => {
                    serde_json::from_str::<Value>(raw)
                        .ok()
                        .filter(Value::is_number)
                        .ok_or_else(|| Error::Config(format!("`{key}`: expected number")))?
                }
                Value::String(_) => Value::String(raw.to_string()),
                _ => return Err(Error::Config(format!("`{key}` is a section"))),
            };
        }
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv(&text)
    }
}

fn flatten(prefix: &str, value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => flatten_map(prefix, map, out),
        Value::String(s) => out.push_str(&format!("{prefix}={s}\n")),
        other => out.push_str(&format!("{prefix}={other}\n")),
    }
}

fn flatten_map(prefix: &str, map: &Map<String, Value>, out: &mut String) {
    for (k, v) in map {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        flatten(&key, v, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let mut cfg = Config::default();
        cfg.segmentation.alpha = 0.35;
        cfg.hmm.termination = Termination::Exit;
        cfg.features.zero_idle_hand = false;
        let back = Config::from_kv(&cfg.to_kv()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = Config::from_kv("# tweak\nlda.dims = 8\n").unwrap();
        assert_eq!(cfg.lda.dims, 8);
        assert_eq!(cfg.hmm.states, 7);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(Config::from_kv("hmm.mixtures=3").is_err());
        assert!(Config::from_kv("hmm.states=lots").is_err());
    }
}
