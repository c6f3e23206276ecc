//! Recordings on disk, left-hand mirroring and the synthetic corpus.
//!
//! A recording is a directory:
//!
//! ```text
//! color_000000.ppm   binary P6, 8 bits per channel
//! depth_000000.pgm   binary P5, 16-bit big-endian millimetres (0 = no reading)
//! skeleton.txt       one line per frame: `name x y z confidence` repeated per joint
//! meta.txt           key=value lines: signer, label, handedness, fps, focal
//! ```

mod manifest;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{read_pgm16, read_ppm, write_pgm16, write_ppm, DepthImage, RgbImage};

pub use manifest::{DatasetManifest, ManifestEntry};
pub use synth::{generate_synthetic_corpus, SynthSpec, SyntheticCorpus, SyntheticSample};

/// Index of the right (dominant after mirroring) hand in per-hand arrays.
pub const RIGHT: usize = 0;
pub const LEFT: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Joint {
    Head,
    Neck,
    Torso,
    ShoulderLeft,
    ShoulderRight,
    HandLeft,
    HandRight,
}

impl Joint {
    pub const ALL: [Joint; 7] = [
        Joint::Head,
        Joint::Neck,
        Joint::Torso,
        Joint::ShoulderLeft,
        Joint::ShoulderRight,
        Joint::HandLeft,
        Joint::HandRight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Joint::Head => "head",
            Joint::Neck => "neck",
            Joint::Torso => "torso",
            Joint::ShoulderLeft => "shoulder_left",
            Joint::ShoulderRight => "shoulder_right",
            Joint::HandLeft => "hand_left",
            Joint::HandRight => "hand_right",
        }
    }

    pub fn from_name(name: &str) -> Option<Joint> {
        Joint::ALL.into_iter().find(|j| j.name() == name)
    }

    /// The joint's counterpart on the other side of the body.
    pub fn mirrored(self) -> Joint {
        match self {
            Joint::ShoulderLeft => Joint::ShoulderRight,
            Joint::ShoulderRight => Joint::ShoulderLeft,
            Joint::HandLeft => Joint::HandRight,
            Joint::HandRight => Joint::HandLeft,
            other => other,
        }
    }
}

/// Image position (px), depth (mm) and tracker confidence of one joint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointReading {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub confidence: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SkeletonPose {
    pub joints: BTreeMap<Joint, JointReading>,
}

impl SkeletonPose {
    pub fn get(&self, joint: Joint) -> Option<&JointReading> {
        self.joints.get(&joint)
    }

    fn require(&self, joint: Joint) -> Result<&JointReading> {
        self.get(joint)
            .ok_or_else(|| Error::InvalidInput(format!("skeleton is missing `{}`", joint.name())))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Handedness {
    Left,
    Right,
}

impl Handedness {
    pub fn flipped(self) -> Self {
        match self {
            Handedness::Left => Handedness::Right,
            Handedness::Right => Handedness::Left,
        }
    }
}

impl fmt::Display for Handedness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Handedness::Left => "left",
            Handedness::Right => "right",
        })
    }
}

impl FromStr for Handedness {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Handedness::Left),
            "right" => Ok(Handedness::Right),
            other => Err(Error::InvalidInput(format!("unknown handedness `{other}`"))),
        }
    }
}

/// Nominal Kinect focal length scaled to the frame width.
pub fn default_focal(width: usize) -> f64 {
    525.0 * width as f64 / 640.0
}

/// One recorded sign performance.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    pub color: Vec<RgbImage>,
    pub depth: Vec<DepthImage>,
    pub skeleton: Vec<SkeletonPose>,
    pub fps: f64,
    /// Focal length in pixels, used to express image distances in millimetres.
    pub focal: f64,
    pub signer_id: String,
    pub sign_label: Option<String>,
    pub handedness: Handedness,
}

impl FrameSequence {
    pub fn len(&self) -> usize {
        self.color.len()
    }

    pub fn is_empty(&self) -> bool {
        self.color.is_empty()
    }

    pub fn width(&self) -> usize {
        self.color.first().map_or(0, RgbImage::width)
    }

    pub fn height(&self) -> usize {
        self.color.first().map_or(0, RgbImage::height)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.color.len();
        if self.depth.len() != n || self.skeleton.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} color, {} depth and {} skeleton frames",
                n,
                self.depth.len(),
                self.skeleton.len()
            )));
        }
        if n < 2 {
            return Err(Error::InvalidInput("a sequence needs at least 2 frames".into()));
        }
        let (w, h) = (self.width(), self.height());
        if self.color.iter().any(|c| (c.width(), c.height()) != (w, h))
            || self.depth.iter().any(|d| (d.width(), d.height()) != (w, h))
        {
            return Err(Error::InvalidInput("frames differ in resolution".into()));
        }
        for (t, pose) in self.skeleton.iter().enumerate() {
            for joint in [Joint::Neck, Joint::Torso, Joint::ShoulderLeft, Joint::ShoulderRight] {
                pose.require(joint)
                    .map_err(|e| Error::InvalidInput(format!("frame {t}: {e}")))?;
            }
        }
        validate_id(&self.signer_id)?;
        if let Some(label) = &self.sign_label {
            validate_id(label)?;
        }
        Ok(())
    }
}

pub(crate) fn validate_id(id: &str) -> Result<()> {
    if id.is_empty() || id.chars().any(|c| c.is_whitespace() || c == '=') {
        Err(Error::InvalidInput(format!(
            "identifier `{id}` must be non-empty without whitespace or `=`"
        )))
    } else {
        Ok(())
    }
}

fn color_name(t: usize) -> String {
    format!("color_{t:06}.ppm")
}

fn depth_name(t: usize) -> String {
    format!("depth_{t:06}.pgm")
}

pub fn save_sequence(seq: &FrameSequence, dir: &Path) -> Result<()> {
    seq.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (t, (color, depth)) in seq.color.iter().zip(&seq.depth).enumerate() {
        write_ppm(&dir.join(color_name(t)), color)?;
        write_pgm16(&dir.join(depth_name(t)), depth)?;
    }
    let mut skel = String::new();
    for pose in &seq.skeleton {
        let fields: Vec<String> = pose
            .joints
            .iter()
            .map(|(j, r)| format!("{} {} {} {} {}", j.name(), r.x, r.y, r.z, r.confidence))
            .collect();
        skel.push_str(&fields.join(" "));
        skel.push('\n');
    }
    let path = dir.join("skeleton.txt");
    std::fs::write(&path, skel).map_err(|e| Error::io(&path, e))?;

    let mut meta = format!("signer={}\n", seq.signer_id);
    if let Some(label) = &seq.sign_label {
        meta.push_str(&format!("label={label}\n"));
    }
    meta.push_str(&format!(
        "handedness={}\nfps={}\nfocal={}\n",
        seq.handedness, seq.fps, seq.focal
    ));
    let path = dir.join("meta.txt");
    std::fs::write(&path, meta).map_err(|e| Error::io(&path, e))
}

fn count_frames(dir: &Path, prefix: &str, suffix: &str) -> Result<usize> {
    let mut indices = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let name = entry.map_err(|e| Error::io(dir, e))?.file_name();
        let name = name.to_string_lossy();
        if let Some(idx) = name.strip_prefix(prefix).and_then(|r| r.strip_suffix(suffix)) {
            let i: usize = idx
                .parse()
                .map_err(|_| Error::format(dir.join(&*name), "unexpected frame file name"))?;
            indices.push(i);
        }
    }
    indices.sort_unstable();
    if let Some(gap) = indices.iter().enumerate().find(|(i, &v)| *i != v) {
        let name = format!("{prefix}{:06}{suffix}", gap.0);
        return Err(Error::format(dir.join(name), "missing frame file"));
    }
    Ok(indices.len())
}

fn parse_skeleton_line(line: &str, path: &Path, lineno: usize) -> Result<SkeletonPose> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() % 5 != 0 {
        return Err(Error::format(path, format!("line {lineno}: expected groups of 5 fields")));
    }
    let mut pose = SkeletonPose::default();
    for group in tokens.chunks_exact(5) {
        let joint = Joint::from_name(group[0])
            .ok_or_else(|| Error::format(path, format!("line {lineno}: unknown joint `{}`", group[0])))?;
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::format(path, format!("line {lineno}: bad number `{s}`")))
        };
        pose.joints.insert(
            joint,
            JointReading {
                x: num(group[1])?,
                y: num(group[2])?,
                z: num(group[3])?,
                confidence: num(group[4])?,
            },
        );
    }
    Ok(pose)
}

pub(crate) fn parse_kv(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(path, format!("line {}: expected key=value", lineno + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn load_sequence(dir: &Path) -> Result<FrameSequence> {
    let n_color = count_frames(dir, "color_", ".ppm")?;
    let n_depth = count_frames(dir, "depth_", ".pgm")?;
    if n_color != n_depth {
        let missing = if n_color > n_depth {
            depth_name(n_depth)
        } else {
            color_name(n_color)
        };
        return Err(Error::LengthMismatch {
            path: dir.join(missing),
            message: format!("{n_color} color frames but {n_depth} depth frames"),
        });
    }

    let skel_path = dir.join("skeleton.txt");
    let skel_text = std::fs::read_to_string(&skel_path).map_err(|e| Error::io(&skel_path, e))?;
    let skeleton = skel_text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_skeleton_line(l, &skel_path, i + 1))
        .collect::<Result<Vec<_>>>()?;
    if skeleton.len() != n_color {
        return Err(Error::LengthMismatch {
            path: skel_path,
            message: format!("{} skeleton lines for {n_color} frames", skeleton.len()),
        });
    }

    let meta_path = dir.join("meta.txt");
    let meta_text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta = parse_kv(&meta_text, &meta_path)?;
    let field = |k: &str| {
        meta.get(k)
            .ok_or_else(|| Error::format(&meta_path, format!("missing `{k}`")))
    };
    let number = |k: &str| -> Result<f64> {
        field(k)?
            .parse()
            .map_err(|_| Error::format(&meta_path, format!("`{k}` is not a number")))
    };
    let handedness = field("handedness")?
        .parse()
        .map_err(|e: Error| Error::format(&meta_path, e.to_string()))?;

    let mut color = Vec::with_capacity(n_color);
    let mut depth = Vec::with_capacity(n_color);
    for t in 0..n_color {
        color.push(read_ppm(&dir.join(color_name(t)))?);
        depth.push(read_pgm16(&dir.join(depth_name(t)))?);
    }
    let width = color.first().map_or(0, RgbImage::width);
    let seq = FrameSequence {
        color,
        depth,
        skeleton,
        fps: number("fps")?,
        focal: if meta.contains_key("focal") {
            number("focal")?
        } else {
            default_focal(width)
        },
        signer_id: field("signer")?.clone(),
        sign_label: meta.get("label").cloned(),
        handedness,
    };
    seq.validate().map_err(|e| Error::format(dir, e.to_string()))?;
    Ok(seq)
}

/// Flips every frame about the vertical axis and swaps left/right joints.
pub fn mirror_sequence(seq: &FrameSequence) -> FrameSequence {
    let w = seq.width() as f64;
    FrameSequence {
        color: seq.color.iter().map(RgbImage::flip_horizontal).collect(),
        depth: seq.depth.iter().map(DepthImage::flip_horizontal).collect(),
        skeleton: seq
            .skeleton
            .iter()
            .map(|pose| SkeletonPose {
                joints: pose
                    .joints
                    .iter()
                    .map(|(j, r)| {
                        (
                            j.mirrored(),
                            JointReading {
                                x: (w - 1.0) - r.x,
                                ..*r
                            },
                        )
                    })
                    .collect(),
            })
            .collect(),
        handedness: seq.handedness.flipped(),
        ..seq.clone()
    }
}

/// Median image distance between the shoulder joints over the first
/// `frames` frames (or all frames if there are fewer).
pub fn shoulder_distance(seq: &FrameSequence, frames: usize) -> Result<f64> {
    let mut dists: Vec<f64> = seq
        .skeleton
        .iter()
        .take(frames.max(1))
        .filter_map(|pose| {
            let l = pose.get(Joint::ShoulderLeft)?;
            let r = pose.get(Joint::ShoulderRight)?;
            Some((l.x - r.x).hypot(l.y - r.y))
        })
        .collect();
    if dists.is_empty() {
        return Err(Error::InvalidInput("no shoulder joints".into()));
    }
    dists.sort_by(f64::total_cmp);
    let n = dists.len();
    let median = if n % 2 == 1 {
        dists[n / 2]
    } else {
        0.5 * (dists[n / 2 - 1] + dists[n / 2])
    };
    if median > 0.0 {
        Ok(median)
    } else {
        Err(Error::InvalidInput("shoulder joints coincide".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose(shoulders: ((f64, f64), (f64, f64))) -> SkeletonPose {
        let mut p = SkeletonPose::default();
        let r = |x, y| JointReading {
            x,
            y,
            z: 1500.0,
            confidence: 1.0,
        };
        p.joints.insert(Joint::Neck, r(240.0, 200.0));
        p.joints.insert(Joint::Torso, r(240.0, 300.0));
        p.joints.insert(Joint::ShoulderRight, r(shoulders.0 .0, shoulders.0 .1));
        p.joints.insert(Joint::ShoulderLeft, r(shoulders.1 .0, shoulders.1 .1));
        p.joints.insert(Joint::HandRight, r(0.0, 300.0));
        p
    }

    pub(crate) fn tiny_sequence(frames: usize) -> FrameSequence {
        let (w, h) = (8, 6);
        let mut color = Vec::new();
        let mut depth = Vec::new();
        for t in 0..frames {
            let mut c = RgbImage::new(w, h);
            let mut d = DepthImage::new(w, h);
            for y in 0..h {
                for x in 0..w {
                    c.put(x, y, [(x * 30) as u8, (y * 40) as u8, (t * 7) as u8]);
                    d.put(x, y, (1000 + x * 300 + y * 7 + t) as u16);
                }
            }
            color.push(c);
            depth.push(d);
        }
        FrameSequence {
            color,
            depth,
            skeleton: (0..frames)
                .map(|_| pose(((200.0, 240.0), (280.0, 240.0))))
                .collect(),
            fps: 30.0,
            focal: default_focal(w),
            signer_id: "A".into(),
            sign_label: Some("smaka".into()),
            handedness: Handedness::Right,
        }
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut seq = tiny_sequence(3);
        seq.skeleton[1].joints.get_mut(&Joint::Neck).unwrap().x = 0.1 + 0.2;
        save_sequence(&seq, dir.path()).unwrap();
        let back = load_sequence(dir.path()).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back, seq);
        for t in 0..3 {
            assert_eq!(back.color[t].as_raw(), seq.color[t].as_raw());
            assert_eq!(back.depth[t].as_raw(), seq.depth[t].as_raw());
        }
    }

    #[test]
    fn missing_depth_frame_is_length_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        save_sequence(&tiny_sequence(3), dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("depth_000002.pgm")).unwrap();
        let err = load_sequence(dir.path()).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { .. }));
        assert!(err.to_string().contains("depth_000002.pgm"), "{err}");
    }

    #[test]
    fn skeleton_line_count_checked() {
        let dir = tempfile::tempdir().unwrap();
        save_sequence(&tiny_sequence(3), dir.path()).unwrap();
        let p = dir.path().join("skeleton.txt");
        let text = std::fs::read_to_string(&p).unwrap();
        let two: Vec<&str> = text.lines().take(2).collect();
        std::fs::write(&p, two.join("\n")).unwrap();
        let err = load_sequence(dir.path()).unwrap_err().to_string();
        assert!(err.contains("skeleton.txt"), "{err}");
    }

    #[test]
    fn malformed_frame_header_names_file() {
        let dir = tempfile::tempdir().unwrap();
        save_sequence(&tiny_sequence(2), dir.path()).unwrap();
        std::fs::write(dir.path().join("color_000001.ppm"), b"P6\nxx").unwrap();
        let err = load_sequence(dir.path()).unwrap_err().to_string();
        assert!(err.contains("color_000001.ppm"), "{err}");
    }

    #[test]
    fn mirror_is_an_involution() {
        let seq = tiny_sequence(3);
        let twice = mirror_sequence(&mirror_sequence(&seq));
        assert_eq!(twice, seq);
    }

    #[test]
    fn mirror_maps_x_and_swaps_sides() {
        let mut seq = tiny_sequence(2);
        let w = seq.width() as f64;
        seq.skeleton[0].joints.get_mut(&Joint::HandRight).unwrap().x = 0.0;
        let m = mirror_sequence(&seq);
        let hand = m.skeleton[0].get(Joint::HandLeft).unwrap();
        assert_eq!(hand.x, w - 1.0);
        assert!(m.skeleton[0].get(Joint::HandRight).is_none());
        assert_eq!(m.color[0].get(0, 0), seq.color[0].get(seq.width() - 1, 0));
        assert_eq!(m.handedness, Handedness::Left);
    }

    #[test]
    fn joint_at_zero_maps_to_639() {
        let mut seq = tiny_sequence(2);
        seq.color = vec![RgbImage::new(640, 480); 2];
        seq.depth = vec![DepthImage::new(640, 480); 2];
        seq.skeleton[0].joints.get_mut(&Joint::Neck).unwrap().x = 0.0;
        let m = mirror_sequence(&seq);
        assert_eq!(m.skeleton[0].get(Joint::Neck).unwrap().x, 639.0);
    }

    #[test]
    fn shoulder_distance_constant() {
        let seq = tiny_sequence(6);
        assert_eq!(shoulder_distance(&seq, 5).unwrap(), 80.0);
    }

    #[test]
    fn shoulder_distance_ignores_one_outlier() {
        let mut seq = tiny_sequence(5);
        seq.skeleton[2] = pose(((100.0, 240.0), (400.0, 100.0)));
        assert_eq!(shoulder_distance(&seq, 5).unwrap(), 80.0);
    }

    #[test]
    fn shoulder_distance_invariant_under_mirror() {
        let mut seq = tiny_sequence(5);
        seq.skeleton[1] = pose(((190.0, 238.0), (275.0, 244.0)));
        let a = shoulder_distance(&seq, 5).unwrap();
        let b = shoulder_distance(&mirror_sequence(&seq), 5).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn shoulder_distance_short_and_degenerate() {
        let seq = tiny_sequence(2);
        assert_eq!(shoulder_distance(&seq, 5).unwrap(), 80.0);
        let mut bad = tiny_sequence(3);
        for p in &mut bad.skeleton {
            *p = pose(((200.0, 240.0), (200.0, 240.0)));
        }
        assert!(shoulder_distance(&bad, 5).is_err());
    }
}
