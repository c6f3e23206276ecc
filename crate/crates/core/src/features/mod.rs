//! Per-frame hand features: position and velocity relative to the body,
//! geometric shape block, Hu moments, shape context and HOG.

mod hog;
mod shape;

pub use hog::{hog, hog_patch, masked_crop, resize, HOG_DIM, HOG_SIZE};
pub use shape::{
    convex_hull, ellipse, geometric_features, hu_moments, hull_pixel_count, moments, perimeter, sample_boundary,
    shape_context, trace_boundary, Moments, HU_DIM, SC_DIM, S_DIM,
};

use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use crate::config::{Config, FeatureConfig};
use crate::dataio::{mirror_sequence, FrameSequence, Handedness, Joint, LEFT, RIGHT};
use crate::error::{Error, Result};
use crate::image::{BlobMask, GrayImage};
use crate::pipeline::{track_sequence, SequenceTrace};
use crate::segmentation::SkinHistogram;

/// Values per hand in the full layout:
/// `x y z ẋ ẏ ż | kx ky | S | HU | SC | HOG`.
pub const HAND_DIM: usize = 6 + 2 + S_DIM + HU_DIM + SC_DIM + HOG_DIM;
const SHAPE_START: usize = 8;

/// One named feature block, for one hand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Block {
    Pos,
    PosXY,
    PosXYZ,
    PosKinect,
    VelocityXYZ,
    S,
    HU,
    SC,
    HOG,
}

impl Block {
    pub const ALL: [Block; 9] = [
        Block::Pos,
        Block::PosXY,
        Block::PosXYZ,
        Block::PosKinect,
        Block::VelocityXYZ,
        Block::S,
        Block::HU,
        Block::SC,
        Block::HOG,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::Pos => "pos",
            Block::PosXY => "posXY",
            Block::PosXYZ => "posXYZ",
            Block::PosKinect => "posKinect",
            Block::VelocityXYZ => "velocityXYZ",
            Block::S => "S",
            Block::HU => "HU",
            Block::SC => "SC",
            Block::HOG => "HOG",
        }
    }

    /// Position of the block within one hand's full layout.
    pub fn layout(self) -> Range<usize> {
        match self {
            Block::Pos => 0..6,
            Block::PosXY => 0..2,
            Block::PosXYZ => 0..3,
            Block::VelocityXYZ => 3..6,
            Block::PosKinect => 6..8,
            Block::S => 8..8 + S_DIM,
            Block::HU => 15..15 + HU_DIM,
            Block::SC => 22..22 + SC_DIM,
            Block::HOG => 67..67 + HOG_DIM,
        }
    }

    pub fn width(self) -> usize {
        self.layout().len()
    }
}

/// Ordered list of blocks; each frame holds the right hand's blocks followed
/// by the left hand's.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FeatureSetSpec {
    pub blocks: Vec<Block>,
}

impl FeatureSetSpec {
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidInput("empty feature set".into()));
        }
        Ok(Self { blocks })
    }

    /// Every value the extractor produces, in layout order.
    pub fn full() -> Self {
        Self {
            blocks: vec![Block::Pos, Block::PosKinect, Block::S, Block::HU, Block::SC, Block::HOG],
        }
    }

    pub fn per_hand(&self) -> usize {
        self.blocks.iter().map(|b| b.width()).sum()
    }

    pub fn dim(&self) -> usize {
        2 * self.per_hand()
    }

    /// Full-layout index of every column, with the hand it belongs to.
    pub fn columns(&self) -> Vec<(usize, usize)> {
        [RIGHT, LEFT]
            .into_iter()
            .flat_map(|hand| self.blocks.iter().flat_map(move |b| b.layout().map(move |i| (hand, i))))
            .collect()
    }
}

impl fmt::Display for FeatureSetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.blocks.iter().map(|b| b.name()).collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for FeatureSetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let blocks = s
            .split(',')
            .map(|name| {
                let name = name.trim();
                Block::ALL
                    .into_iter()
                    .find(|b| b.name() == name)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown feature block `{name}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(blocks)
    }
}

/// Feature vectors of one sign performance.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSample {
    pub label: String,
    pub signer: String,
    pub spec: FeatureSetSpec,
    pub frames: Vec<Vec<f64>>,
}

impl FeatureSample {
    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Columns of this sample's frames that belong to `hand`.
    fn hand_columns(&self, hand: usize) -> Range<usize> {
        let w = self.spec.per_hand();
        hand * w..(hand + 1) * w
    }

    /// Column holding full-layout value `index` of `hand`, if present.
    fn column_of(&self, hand: usize, index: usize) -> Option<usize> {
        self.spec.columns().iter().position(|&c| c == (hand, index))
    }

    /// Re-expresses the sample in `spec`, whose blocks must be covered by
    /// this sample's blocks.
    pub fn select(&self, spec: &FeatureSetSpec) -> Result<FeatureSample> {
        let cols = spec
            .columns()
            .into_iter()
            .map(|(hand, i)| {
                self.column_of(hand, i)
                    .ok_or_else(|| Error::InvalidInput(format!("feature set `{}` lacks values for `{spec}`", self.spec)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureSample {
            label: self.label.clone(),
            signer: self.signer.clone(),
            spec: spec.clone(),
            frames: self.frames.iter().map(|f| cols.iter().map(|&c| f[c]).collect()).collect(),
        })
    }

    /// Header line then `label signer frame v1 .. vD` per frame.
    pub fn to_text(&self) -> String {
        let mut out = format!("# spec={} dim={}\n", self.spec, self.dim());
        for (t, frame) in self.frames.iter().enumerate() {
            out.push_str(&format!("{} {} {}", self.label, self.signer, t));
            for v in frame {
                out.push_str(&format!(" {v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidInput(format!("feature file: {m}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty".into()))?;
        let mut spec = None;
        let mut dim = None;
        for tok in header.trim_start_matches('#').split_whitespace() {
            if let Some(v) = tok.strip_prefix("spec=") {
                spec = Some(v.parse::<FeatureSetSpec>()?);
            } else if let Some(v) = tok.strip_prefix("dim=") {
                dim = Some(v.parse::<usize>().map_err(|_| bad(format!("bad dim `{v}`")))?);
            }
        }
        let spec = spec.ok_or_else(|| bad("missing spec".into()))?;
        let dim = dim.ok_or_else(|| bad("missing dim".into()))?;
        if dim != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                found: dim,
            });
        }
        let (mut label, mut signer) = (String::new(), String::new());
        let mut frames = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let mut tok = line.split_whitespace();
            let (Some(l), Some(s), Some(t)) = (tok.next(), tok.next(), tok.next()) else {
                return Err(bad(format!("line {}: truncated", lineno + 2)));
            };
            if t.parse::<usize>().ok() != Some(frames.len()) {
                return Err(bad(format!("line {}: frame index out of order", lineno + 2)));
            }
            label = l.to_string();
            signer = s.to_string();
            let values = tok
                .map(|v| v.parse::<f64>().map_err(|_| bad(format!("line {}: bad value `{v}`", lineno + 2))))
                .collect::<Result<Vec<_>>>()?;
            if values.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: values.len(),
                });
            }
            frames.push(values);
        }
        if frames.is_empty() {
            return Err(bad("no frames".into()));
        }
        Ok(Self {
            label,
            signer,
            spec,
            frames,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Total path length and mean per-frame speed of `hand`'s (x, y).
fn hand_motion(sample: &FeatureSample, hand: usize) -> Option<(f64, f64)> {
    let cx = sample.column_of(hand, 0)?;
    let cy = sample.column_of(hand, 1)?;
    let path: f64 = sample
        .frames
        .windows(2)
        .map(|w| (w[1][cx] - w[0][cx]).hypot(w[1][cy] - w[0][cy]))
        .sum();
    let steps = sample.frames.len().saturating_sub(1).max(1);
    Some((path, path / steps as f64))
}

/// Whether `hand` stays below both idle thresholds. Samples without image
/// positions have no idle hands.
pub fn is_idle(sample: &FeatureSample, hand: usize, cfg: &FeatureConfig) -> bool {
    hand_motion(sample, hand).is_some_and(|(path, speed)| path < cfg.idle_path && speed < cfg.idle_speed)
}

/// Sets every value of an idle hand to zero.
pub fn zero_idle_hand(sample: &FeatureSample, cfg: &FeatureConfig) -> FeatureSample {
    let mut out = sample.clone();
    for hand in [RIGHT, LEFT] {
        if is_idle(sample, hand, cfg) {
            let cols = out.hand_columns(hand);
            for f in &mut out.frames {
                f[cols.clone()].iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
    out
}

/// Normalised position values of one hand in one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Positional {
    pub pos: [f64; 3],
    pub vel: [f64; 2],
    pub kinect: [f64; 2],
}

#[allow(clippy::too_many_arguments)]
/// Image position and velocity relative to the neck in shoulder widths,
/// depth relative to the torso in millimetre shoulder widths.
pub fn positional_features(
    position: (f64, f64),
    velocity: (f64, f64),
    depth: f64,
    kinect: (f64, f64),
    neck: (f64, f64),
    torso_depth: f64,
    shoulder_px: f64,
    shoulder_mm: f64,
) -> Positional {
    Positional {
        pos: [
            (position.0 - neck.0) / shoulder_px,
            (position.1 - neck.1) / shoulder_px,
            (depth - torso_depth) / shoulder_mm,
        ],
        vel: [velocity.0 / shoulder_px, velocity.1 / shoulder_px],
        kinect: [(kinect.0 - neck.0) / shoulder_px, (kinect.1 - neck.1) / shoulder_px],
    }
}

/// S-block with lengths in shoulder widths and area in squared widths.
pub fn normalise_s_block(s: [f64; S_DIM], shoulder_px: f64) -> [f64; S_DIM] {
    let mut out = s;
    out[0] /= shoulder_px * shoulder_px;
    out[1] /= shoulder_px;
    out[4] /= shoulder_px;
    out[5] /= shoulder_px;
    out
}

fn shape_block(gray: &GrayImage, blob: &BlobMask, cfg: &FeatureConfig, sd: f64) -> Option<Vec<f64>> {
    let s = geometric_features(blob, cfg.eccentricity)?;
    let hu = hu_moments(blob)?;
    let sc = shape_context(blob)?;
    let hg = hog(gray, blob)?;
    let mut out = Vec::with_capacity(HAND_DIM - SHAPE_START);
    out.extend(normalise_s_block(s, sd));
    out.extend(hu);
    out.extend(sc);
    out.extend(hg);
    Some(out)
}

/// Full-layout feature frames from a tracked sequence. Frames without neck
/// or torso joints are dropped.
pub fn extract_frames(seq: &FrameSequence, trace: &SequenceTrace, cfg: &FeatureConfig) -> Result<Vec<Vec<f64>>> {
    if trace.frames.len() != seq.len() {
        return Err(Error::InvalidInput(format!(
            "trace has {} frames, sequence {}",
            trace.frames.len(),
            seq.len()
        )));
    }
    let sd = trace.shoulder_distance;
    let torso0 = seq
        .skeleton
        .iter()
        .find_map(|p| p.get(Joint::Torso).filter(|j| j.z > 0.0))
        .map(|j| j.z)
        .ok_or_else(|| Error::InvalidInput("no torso depth".into()))?;
    let sd_mm = sd * torso0 / seq.focal;

    let mut shapes: [Option<Vec<f64>>; 2] = [None, None];
    let mut prev_z: [Option<f64>; 2] = [None, None];
    let mut frames = Vec::with_capacity(seq.len());
    for (t, ft) in trace.frames.iter().enumerate() {
        let pose = &seq.skeleton[t];
        let (Some(neck), Some(torso)) = (pose.get(Joint::Neck), pose.get(Joint::Torso)) else {
            log::warn!("{}: frame {t} lacks neck or torso joint; dropped", seq.signer_id);
            continue;
        };
        let mut frame = vec![0.0; 2 * HAND_DIM];
        let gray = seq.color[t].to_gray();
        for hand in [RIGHT, LEFT] {
            let hf = &ft.hands[hand];
            let obs = &hf.observation;
            let joint = if hand == RIGHT { Joint::HandRight } else { Joint::HandLeft };
            let kinect = pose.get(joint).map_or((neck.x, neck.y), |j| (j.x, j.y));
            let p = positional_features(hf.position, hf.velocity, obs.depth, kinect, (neck.x, neck.y), torso.z, sd, sd_mm);
            let zdot = prev_z[hand].map_or(0.0, |z| p.pos[2] - z);
            prev_z[hand] = Some(p.pos[2]);

            if !obs.missing && !obs.shape_frozen {
                if let Some(s) = shape_block(&gray, &obs.mask, cfg, sd) {
                    shapes[hand] = Some(s);
                } else {
                    log::debug!("{}: frame {t} hand {hand}: degenerate blob", seq.signer_id);
                }
            }
            let out = &mut frame[hand * HAND_DIM..(hand + 1) * HAND_DIM];
            out[0..3].copy_from_slice(&p.pos);
            out[3..5].copy_from_slice(&p.vel);
            out[5] = zdot;
            out[6..8].copy_from_slice(&p.kinect);
            if let Some(s) = &shapes[hand] {
                out[SHAPE_START..].copy_from_slice(s);
            }
        }
        frames.push(frame);
    }
    // The first depth velocity has no predecessor; reuse the next one.
    if frames.len() > 1 {
        for hand in [RIGHT, LEFT] {
            frames[0][hand * HAND_DIM + 5] = frames[1][hand * HAND_DIM + 5];
        }
    }
    Ok(frames)
}

/// Segments, tracks and describes one recording in the full layout.
/// Left-handed recordings are mirrored first so the dominant hand is always
/// the right-hand slot.
pub fn extract_sample(seq: &FrameSequence, general: &SkinHistogram, cfg: &Config) -> Result<FeatureSample> {
    let mirrored;
    let seq = if seq.handedness == Handedness::Left {
        mirrored = mirror_sequence(seq);
        &mirrored
    } else {
        seq
    };
    let trace = track_sequence(seq, general, cfg, false)?;
    let frames = extract_frames(seq, &trace, &cfg.features)?;
    if frames.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no usable frames", seq.signer_id)));
    }
    let sample = FeatureSample {
        label: seq.sign_label.clone().unwrap_or_else(|| "unknown".into()),
        signer: seq.signer_id.clone(),
        spec: FeatureSetSpec::full(),
        frames,
    };
    Ok(if cfg.features.zero_idle_hand {
        zero_idle_hand(&sample, &cfg.features)
    } else {
        sample
    })
}

/// Re-expresses a sample in `spec`.
pub fn assemble(sample: &FeatureSample, spec: &FeatureSetSpec) -> Result<FeatureSample> {
    sample.select(spec)
}
