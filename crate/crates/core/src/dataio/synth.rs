//! Synthetic signing corpus.
//!
//! Each class is a parametric 3D trajectory for the dominant hand (and
//! optionally the other hand) through a few keyframes, with a hand shape per
//! keyframe. Signers warp trajectories with a 2D affine transform and bias the
//! hand aspect ratio; samples add keyframe jitter, time warping and idle lead
//! in/out frames. Frames are rendered with a weak-perspective camera into RGB
//! and depth with a z-buffer, so the rendered label buffer yields exact
//! ground-truth hand masks.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    default_focal, mirror_sequence, LEFT, RIGHT, save_sequence, DatasetManifest, FrameSequence, Handedness, Joint,
    JointReading, ManifestEntry, SkeletonPose,
};
use crate::error::{Error, Result};
use crate::image::{write_pgm8, BlobMask, DepthImage, GrayImage, Rect, RgbImage};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub signers: usize,
    pub samples_per_signer: usize,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    /// Nominal number of frames with the hands in motion.
    pub active_frames: usize,
    pub length_jitter: usize,
    /// Upper bound on idle frames before and after the motion.
    pub max_idle_frames: usize,
    /// Scales the per-signer affine trajectory warp.
    pub style_strength: f64,
    /// Extra scale on the translation part of the warp, on top of
    /// `style_strength`.
    pub offset_strength: f64,
    /// Relative per-signer hand aspect-ratio bias.
    pub shape_bias: f64,
    /// Per-sample keyframe jitter in shoulder widths.
    pub trajectory_noise: f64,
    pub pixel_noise: f64,
    /// Depth noise standard deviation (mm).
    pub depth_noise: f64,
    /// Skeleton hand-joint noise (px); also enables occasional glitches.
    pub skeleton_noise: f64,
    /// Class pairs whose trajectories differ only in depth.
    pub depth_only_pairs: usize,
    /// Two-handed classes whose hands meet in front of the chest.
    pub crossing_classes: usize,
    /// The last this-many signers are left-handed.
    pub left_handed_signers: usize,
    /// Render fingers; without them hands are plain ellipses.
    pub hand_detail: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            signers: 4,
            samples_per_signer: 6,
            width: 320,
            height: 240,
            fps: 30.0,
            active_frames: 28,
            length_jitter: 4,
            max_idle_frames: 4,
            style_strength: 1.0,
            offset_strength: 1.0,
            shape_bias: 0.15,
            trajectory_noise: 0.04,
            pixel_noise: 4.0,
            depth_noise: 4.0,
            skeleton_noise: 3.0,
            depth_only_pairs: 0,
            crossing_classes: 1,
            left_handed_signers: 1,
            hand_detail: true,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidInput(format!("synthetic spec: {m}")));
        if self.classes < 2 {
            return fail("need at least 2 classes");
        }
        if self.signers == 0 || self.samples_per_signer == 0 {
            return fail("need at least one signer and one sample");
        }
        if self.width < 64 || self.height < 48 {
            return fail("resolution below 64x48");
        }
        if self.active_frames < 8 || self.length_jitter >= self.active_frames / 2 {
            return fail("too few active frames");
        }
        if self.crossing_classes + 2 * self.depth_only_pairs > self.classes {
            return fail("more crossing and depth-only classes than classes");
        }
        if self.left_handed_signers > self.signers {
            return fail("more left-handed signers than signers");
        }
        Ok(())
    }

    pub fn total_samples(&self) -> usize {
        self.classes * self.signers * self.samples_per_signer
    }
}

/// Hand pose at one keyframe. Positions are in shoulder widths relative to
/// the neck (x right in the image, y down); `w` is millimetres in front of the
/// torso.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HandKey {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub aspect: f64,
    pub angle: f64,
    pub fingers: u8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassTemplate {
    pub label: String,
    pub right: Vec<HandKey>,
    /// `None` keeps the left hand at rest.
    pub left: Option<Vec<HandKey>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignerStyle {
    pub id: String,
    pub handedness: Handedness,
    pub linear: [[f64; 2]; 2],
    pub offset: [f64; 2],
    pub aspect_bias: f64,
    pub shoulder_mm: f64,
    pub distance_mm: f64,
    pub neck_dx: f64,
    pub skin: [f64; 3],
    pub clothing: [f64; 3],
    pub wall: [f64; 3],
}

const REST_RIGHT: HandKey = HandKey {
    u: -0.55,
    v: 1.75,
    w: 120.0,
    aspect: 0.8,
    angle: PI / 2.0,
    fingers: 0,
};

fn rest(hand_left: bool) -> HandKey {
    if hand_left {
        HandKey {
            u: -REST_RIGHT.u,
            ..REST_RIGHT
        }
    } else {
        REST_RIGHT
    }
}

const PALM_MAJOR: f64 = 0.16;
const HEAD_DROP: f64 = 0.55;
const HEAD_AXES: (f64, f64) = (0.26, 0.34);

fn mix(seed: u64, parts: &[u64]) -> u64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
    }
    h
}

fn rng_for(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, parts))
}

fn gauss(rng: &mut impl Rng) -> f64 {
    // Box-Muller; only used for the small number of geometric draws.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Evaluates a rest-keys-rest path at normalized time `s`.
fn eval_path(keys: &[HandKey], hand_left: bool, s: f64) -> HandKey {
    let r = rest(hand_left);
    let n = keys.len() + 1;
    let s = s.clamp(0.0, 1.0);
    let seg = ((s * n as f64).floor() as usize).min(n - 1);
    let local = s * n as f64 - seg as f64;
    let a = if seg == 0 { r } else { keys[seg - 1] };
    let b = if seg == n - 1 { r } else { keys[seg] };
    let e = smoothstep(local);
    HandKey {
        u: lerp(a.u, b.u, e),
        v: lerp(a.v, b.v, e),
        w: lerp(a.w, b.w, e),
        aspect: lerp(a.aspect, b.aspect, e),
        angle: lerp(a.angle, b.angle, e),
        fingers: if local < 0.5 { a.fingers } else { b.fingers },
    }
}

fn path_distance(a: &[HandKey], b: &[HandKey]) -> f64 {
    let n = 24;
    (0..n)
        .map(|i| {
            let s = i as f64 / (n - 1) as f64;
            let (p, q) = (eval_path(a, false, s), eval_path(b, false, s));
            (p.u - q.u).hypot(p.v - q.v)
        })
        .sum::<f64>()
        / n as f64
}

fn random_key(rng: &mut impl Rng, detail: bool) -> HandKey {
    HandKey {
        u: rng.gen_range(-0.95..0.45),
        v: rng.gen_range(-0.45..1.25),
        w: rng.gen_range(180.0..450.0),
        aspect: rng.gen_range(0.5..1.0),
        angle: rng.gen_range(0.0..PI),
        fingers: if detail { rng.gen_range(0..=3) } else { 0 },
    }
}

fn mirror_keys(keys: &[HandKey]) -> Vec<HandKey> {
    keys.iter()
        .map(|k| HandKey {
            u: -k.u,
            angle: PI - k.angle,
            ..*k
        })
        .collect()
}

fn build_classes(spec: &SynthSpec, seed: u64) -> Vec<ClassTemplate> {
    let mut rng = rng_for(seed, &[1]);
    let depth_start = spec.classes - 2 * spec.depth_only_pairs;
    let mut classes: Vec<ClassTemplate> = Vec::with_capacity(spec.classes);
    let mut i = 0;
    while i < spec.classes {
        let label = format!("sign{i:02}");
        if i < spec.crossing_classes {
            let j = |rng: &mut ChaCha8Rng| rng.gen_range(-0.08..0.08);
            let right = vec![
                HandKey { u: -0.06 + j(&mut rng), v: 0.85 + j(&mut rng), w: 330.0, aspect: 0.7, angle: 1.2, fingers: 1 },
                HandKey { u: 0.2 + j(&mut rng), v: 0.55 + j(&mut rng), w: 320.0, aspect: 0.75, angle: 0.8, fingers: 2 },
                HandKey { u: -0.35 + j(&mut rng), v: 0.45 + j(&mut rng), w: 300.0, aspect: 0.8, angle: 1.6, fingers: 0 },
            ];
            let left = vec![
                HandKey { u: 0.06, v: 0.9, w: 210.0, aspect: 0.7, angle: 1.9, fingers: 0 },
                HandKey { u: 0.0, v: 0.75, w: 220.0, aspect: 0.75, angle: 2.3, fingers: 1 },
                HandKey { u: 0.35, v: 0.45, w: 200.0, aspect: 0.8, angle: 1.5, fingers: 0 },
            ];
            let detail = spec.hand_detail;
            let strip = |keys: Vec<HandKey>| {
                keys.into_iter()
                    .map(|k| HandKey {
                        fingers: if detail { k.fingers } else { 0 },
                        ..k
                    })
                    .collect()
            };
            classes.push(ClassTemplate {
                label,
                right: strip(right),
                left: Some(strip(left)),
            });
            i += 1;
            continue;
        }

        let depth_pair = i >= depth_start;
        let mut best: Option<(f64, Vec<HandKey>)> = None;
        for _ in 0..500 {
            let mut keys: Vec<HandKey> = (0..3).map(|_| random_key(&mut rng, spec.hand_detail)).collect();
            if depth_pair {
                for (k, key) in keys.iter_mut().enumerate() {
                    key.w = if k % 2 == 0 {
                        rng.gen_range(180.0..230.0)
                    } else {
                        rng.gen_range(400.0..450.0)
                    };
                }
            }
            let sep = classes
                .iter()
                .map(|c| path_distance(&c.right, &keys))
                .fold(f64::INFINITY, f64::min);
            if best.as_ref().is_none_or(|(b, _)| sep > *b) {
                best = Some((sep, keys));
            }
            if sep >= 0.4 {
                break;
            }
        }
        let keys = best.expect("at least one attempt").1;
        if depth_pair {
            let twin: Vec<HandKey> = keys
                .iter()
                .map(|k| HandKey {
                    w: 630.0 - k.w,
                    ..*k
                })
                .collect();
            classes.push(ClassTemplate {
                label,
                right: keys,
                left: None,
            });
            classes.push(ClassTemplate {
                label: format!("sign{:02}", i + 1),
                right: twin,
                left: None,
            });
            i += 2;
        } else {
            let left = (i % 3 == 2).then(|| mirror_keys(&keys));
            classes.push(ClassTemplate {
                label,
                right: keys,
                left,
            });
            i += 1;
        }
    }
    classes
}

const CLOTHING: [[f64; 3]; 5] = [
    [40.0, 55.0, 120.0],
    [45.0, 95.0, 60.0],
    [85.0, 85.0, 95.0],
    [95.0, 50.0, 100.0],
    [35.0, 85.0, 110.0],
];

const WALLS: [[f64; 3]; 3] = [[170.0, 180.0, 190.0], [150.0, 170.0, 150.0], [200.0, 200.0, 210.0]];

fn signer_name(k: usize) -> String {
    if k < 26 {
        char::from(b'A' + k as u8).to_string()
    } else {
        format!("S{k}")
    }
}

fn build_signers(spec: &SynthSpec, seed: u64) -> Vec<SignerStyle> {
    (0..spec.signers)
        .map(|k| {
            let mut rng = rng_for(seed, &[2, k as u64]);
            let st = spec.style_strength;
            let mut u = |lo: f64, hi: f64| rng.gen_range(lo..hi);
            let linear = [
                [1.0 + st * u(-0.2, 0.2), st * u(-0.15, 0.15)],
                [st * u(-0.15, 0.15), 1.0 + st * u(-0.2, 0.2)],
            ];
            let os = st * spec.offset_strength;
            let offset = [os * u(-0.3, 0.3), os * u(-0.25, 0.25)];
            let aspect_bias = spec.shape_bias * u(-1.0, 1.0);
            let shoulder_mm = u(340.0, 390.0);
            let distance_mm = u(1550.0, 1750.0);
            let neck_dx = u(-0.04, 0.04);
            let red = u(185.0, 230.0);
            let skin = [red, red * u(0.66, 0.74), red * u(0.52, 0.62)];
            let clothing = CLOTHING[(mix(seed, &[3, k as u64]) % CLOTHING.len() as u64) as usize];
            let wall = WALLS[(mix(seed, &[4, k as u64]) % WALLS.len() as u64) as usize];
            SignerStyle {
                id: signer_name(k),
                handedness: if k >= spec.signers - spec.left_handed_signers {
                    Handedness::Left
                } else {
                    Handedness::Right
                },
                linear,
                offset,
                aspect_bias,
                shoulder_mm,
                distance_mm,
                neck_dx,
                skin,
                clothing,
                wall,
            }
        })
        .collect()
}

/// Per-frame ground truth for one hand, in the coordinates of the emitted
/// (possibly mirrored) frames.
#[derive(Clone, Debug, PartialEq)]
pub struct HandTruth {
    /// Projected palm centre (px).
    pub center: (f64, f64),
    pub depth: f64,
    /// Pixels where this hand is the nearest surface.
    pub visible: BlobMask,
    /// The whole hand shape, ignoring occluders.
    pub full: BlobMask,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameTruth {
    /// Indexed by [`RIGHT`] / [`LEFT`] in frame terms.
    pub hands: [HandTruth; 2],
    pub hand_over_hand: bool,
    pub hand_over_face: [bool; 2],
    pub head_box: Rect,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceTruth {
    pub frames: Vec<FrameTruth>,
    /// Configured shoulder span in pixels.
    pub shoulder_span: f64,
}

#[derive(Clone, Debug)]
pub struct SyntheticSample {
    pub entry: ManifestEntry,
    pub sequence: FrameSequence,
    pub truth: SequenceTruth,
}

/// Label buffer values of the renderer.
pub mod labels {
    pub const BACKGROUND: u8 = 0;
    pub const CLOTHING: u8 = 1;
    pub const ARM: u8 = 2;
    pub const FACE: u8 = 3;
    pub const HAND_RIGHT: u8 = 4;
    pub const HAND_LEFT: u8 = 5;
    pub const EYE: u8 = 6;
}

/// A rendered frame before noise and mirroring.
#[derive(Clone, Debug)]
pub struct RenderedFrame {
    pub color: RgbImage,
    pub depth: DepthImage,
    pub labels: GrayImage,
    pub pose: SkeletonPose,
    pub truth: FrameTruth,
}

struct Canvas {
    width: usize,
    height: usize,
    color: Vec<[f64; 3]>,
    depth: Vec<f64>,
    label: Vec<u8>,
}

impl Canvas {
    fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            color: vec![[0.0; 3]; width * height],
            depth: vec![f64::INFINITY; width * height],
            label: vec![labels::BACKGROUND; width * height],
        }
    }

    #[inline]
    fn plot(&mut self, x: i64, y: i64, z: f64, c: [f64; 3], l: u8) {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return;
        }
        let i = y as usize * self.width + x as usize;
        if z < self.depth[i] {
            self.depth[i] = z;
            self.color[i] = c;
            self.label[i] = l;
        }
    }

    fn bounds(&self, cx: f64, cy: f64, r: f64) -> (i64, i64, i64, i64) {
        let x0 = ((cx - r).floor() as i64).max(0);
        let y0 = ((cy - r).floor() as i64).max(0);
        let x1 = ((cx + r).ceil() as i64).min(self.width as i64 - 1);
        let y1 = ((cy + r).ceil() as i64).min(self.height as i64 - 1);
        (x0, y0, x1, y1)
    }
}

/// Rotated ellipse: returns normalized radius squared of pixel `(x, y)`.
#[inline]
fn ellipse_rho2(x: f64, y: f64, cx: f64, cy: f64, a: f64, b: f64, angle: f64) -> f64 {
    let (s, c) = angle.sin_cos();
    let (dx, dy) = (x - cx, y - cy);
    let p = dx * c + dy * s;
    let q = -dx * s + dy * c;
    (p / a).powi(2) + (q / b).powi(2)
}

/// Distance from `(x, y)` to segment `p0-p1` and the projection parameter.
fn segment_distance(x: f64, y: f64, p0: (f64, f64), p1: (f64, f64)) -> (f64, f64) {
    let (dx, dy) = (p1.0 - p0.0, p1.1 - p0.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((x - p0.0) * dx + (y - p0.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (px, py) = (p0.0 + t * dx, p0.1 + t * dy);
    ((x - px).hypot(y - py), t)
}

/// Geometry of one hand in pixels.
#[derive(Clone, Copy, Debug)]
struct HandShape {
    cx: f64,
    cy: f64,
    depth: f64,
    major: f64,
    minor: f64,
    angle: f64,
    fingers: u8,
}

impl HandShape {
    fn finger_segments(&self) -> Vec<((f64, f64), (f64, f64), f64)> {
        let radius = 0.22 * self.minor;
        let (s, c) = self.angle.sin_cos();
        (0..self.fingers)
            .map(|f| {
                let spread = (f as f64 - (self.fingers as f64 - 1.0) / 2.0) * 0.35;
                let (fs, fc) = (self.angle + spread).sin_cos();
                let base = (self.cx + 0.6 * self.major * c, self.cy + 0.6 * self.major * s);
                let tip = (base.0 + 0.85 * self.major * fc, base.1 + 0.85 * self.major * fs);
                (base, tip, radius)
            })
            .collect()
    }

    fn reach(&self) -> f64 {
        self.major * 2.6 + 2.0
    }

    /// Shading factor for a hand pixel, `None` outside the shape.
    fn shade(&self, x: f64, y: f64) -> Option<f64> {
        let rho2 = ellipse_rho2(x, y, self.cx, self.cy, self.major, self.minor, self.angle);
        if rho2 <= 1.0 {
            return Some(1.0 - 0.25 * rho2);
        }
        for (p0, p1, r) in self.finger_segments() {
            let (d, t) = segment_distance(x, y, p0, p1);
            if d <= r {
                return Some(0.88 - 0.1 * t);
            }
        }
        None
    }

    fn full_mask(&self, width: usize, height: usize) -> BlobMask {
        let r = self.reach();
        let mut px = Vec::new();
        let x0 = (self.cx - r).floor().max(0.0) as i64;
        let y0 = (self.cy - r).floor().max(0.0) as i64;
        let x1 = ((self.cx + r).ceil() as i64).min(width as i64 - 1);
        let y1 = ((self.cy + r).ceil() as i64).min(height as i64 - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if self.shade(x as f64, y as f64).is_some() {
                    px.push((x, y));
                }
            }
        }
        BlobMask::from_pixels(&px)
    }
}

/// Scene geometry of one frame in pixel space.
struct Scene {
    neck: (f64, f64),
    scale: f64,
    distance: f64,
    hands: [HandShape; 2],
}

/// Deterministic synthetic corpus; samples are rendered on demand.
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub spec: SynthSpec,
    pub seed: u64,
    pub manifest: DatasetManifest,
    pub classes: Vec<ClassTemplate>,
    pub signers: Vec<SignerStyle>,
}

pub fn generate_synthetic_corpus(spec: &SynthSpec, seed: u64) -> Result<SyntheticCorpus> {
    SyntheticCorpus::new(spec.clone(), seed)
}

impl SyntheticCorpus {
    pub fn new(spec: SynthSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let classes = build_classes(&spec, seed);
        let signers = build_signers(&spec, seed);
        let mut entries = Vec::with_capacity(spec.total_samples());
        for s in &signers {
            for rep in 0..spec.samples_per_signer {
                for c in &classes {
                    entries.push(ManifestEntry {
                        path: format!("{}/{}_{rep:02}", s.id, c.label).into(),
                        signer: s.id.clone(),
                        label: c.label.clone(),
                        handedness: s.handedness,
                    });
                }
            }
        }
        let manifest = DatasetManifest {
            entries,
            vocabulary: classes.iter().map(|c| c.label.clone()).collect(),
        };
        Ok(Self {
            spec,
            seed,
            manifest,
            classes,
            signers,
        })
    }

    pub fn len(&self) -> usize {
        self.manifest.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.entries.is_empty()
    }

    /// (signer, repetition, class) of entry `index`.
    pub fn coordinates(&self, index: usize) -> (usize, usize, usize) {
        let c = self.spec.classes;
        let per_signer = c * self.spec.samples_per_signer;
        (index / per_signer, (index % per_signer) / c, index % c)
    }

    fn focal(&self) -> f64 {
        default_focal(self.spec.width)
    }

    /// Pixels per shoulder width for a signer.
    pub fn shoulder_span(&self, signer: usize) -> f64 {
        let st = &self.signers[signer];
        st.shoulder_mm * self.focal() / st.distance_mm
    }

    /// Per-frame hand keys (right, left) of one sample before rendering.
    pub fn sample_keys(&self, index: usize) -> Vec<[HandKey; 2]> {
        let (k, rep, c) = self.coordinates(index);
        let spec = &self.spec;
        let style = &self.signers[k];
        let class = &self.classes[c];
        let mut rng = rng_for(self.seed, &[5, k as u64, rep as u64, c as u64]);

        let noise = spec.trajectory_noise;
        let jitter = |keys: &[HandKey], rng: &mut ChaCha8Rng| -> Vec<HandKey> {
            keys.iter()
                .map(|key| HandKey {
                    u: key.u + noise * gauss(rng),
                    v: key.v + noise * gauss(rng),
                    w: key.w + 500.0 * noise * gauss(rng),
                    aspect: (key.aspect * (1.0 + 0.5 * noise * gauss(rng))).clamp(0.3, 1.0),
                    ..*key
                })
                .collect()
        };
        let right = jitter(&class.right, &mut rng);
        let left = class.left.as_ref().map(|l| jitter(l, &mut rng));

        let span = 2 * spec.length_jitter + 1;
        let active = spec.active_frames - spec.length_jitter + rng.gen_range(0..span);
        let lead_in = rng.gen_range(1..=spec.max_idle_frames.max(1));
        let lead_out = rng.gen_range(1..=spec.max_idle_frames.max(1));
        let warp: f64 = rng.gen_range(-0.4..0.4);

        let styled = |key: HandKey| -> HandKey {
            let [[a, b], [c, d]] = style.linear;
            HandKey {
                u: a * key.u + b * key.v + style.offset[0],
                v: c * key.u + d * key.v + style.offset[1],
                aspect: (key.aspect * (1.0 + style.aspect_bias)).clamp(0.3, 1.0),
                ..key
            }
        };

        let total = lead_in + active + lead_out;
        (0..total)
            .map(|t| {
                let s = if t < lead_in {
                    0.0
                } else if t >= lead_in + active {
                    1.0
                } else {
                    let s = (t - lead_in) as f64 / (active - 1) as f64;
                    s + warp * s * (1.0 - s)
                };
                let r = eval_path(&right, false, s);
                let l = match &left {
                    Some(keys) => eval_path(keys, true, s),
                    None => rest(true),
                };
                // Rest poses share the signer's warp.
                let r = if s == 0.0 || s == 1.0 { styled(rest(false)) } else { styled(r) };
                let l = if left.is_none() || s == 0.0 || s == 1.0 {
                    styled(rest(true))
                } else {
                    styled(l)
                };
                [r, l]
            })
            .collect()
    }

    fn scene(&self, signer: usize, keys: &[HandKey; 2]) -> Scene {
        let style = &self.signers[signer];
        let scale = self.shoulder_span(signer);
        let neck = (
            self.spec.width as f64 * (0.5 + style.neck_dx),
            self.spec.height as f64 * 0.3,
        );
        let hand = |k: &HandKey| HandShape {
            cx: neck.0 + k.u * scale,
            cy: neck.1 + k.v * scale,
            depth: style.distance_mm - k.w,
            major: PALM_MAJOR * scale,
            minor: PALM_MAJOR * scale * k.aspect,
            angle: k.angle,
            fingers: k.fingers,
        };
        Scene {
            neck,
            scale,
            distance: style.distance_mm,
            hands: [hand(&keys[0]), hand(&keys[1])],
        }
    }

    fn rasterize(&self, signer: usize, scene: &Scene) -> Canvas {
        let (w, h) = (self.spec.width, self.spec.height);
        let style = &self.signers[signer];
        let mut cv = Canvas::new(w, h);
        let sc = scene.scale;
        let (nx, ny) = scene.neck;
        let z0 = scene.distance;

        for y in 0..h {
            for x in 0..w {
                let g = 1.0 - 0.15 * y as f64 / h as f64;
                let c = [style.wall[0] * g, style.wall[1] * g, style.wall[2] * g];
                cv.plot(x as i64, y as i64, 3000.0 + 0.5 * y as f64, c, labels::BACKGROUND);
            }
        }

        // Torso and collar.
        let half = 0.62 * sc;
        let top = ny - 0.05 * sc;
        for y in (top.max(0.0) as i64)..h as i64 {
            for x in ((nx - half).max(0.0) as i64)..=((nx + half) as i64).min(w as i64 - 1) {
                let r = (x as f64 - nx) / sc;
                let shade = 1.0 - 0.1 * r.abs();
                let c = style.clothing.map(|v| v * shade);
                cv.plot(x, y, z0 + 40.0 * r * r, c, labels::CLOTHING);
            }
        }
        let head = (nx, ny - HEAD_DROP * sc);
        let (hax, hay) = (HEAD_AXES.0 * sc, HEAD_AXES.1 * sc);
        for y in ((head.1 + 0.6 * hay) as i64)..=(ny as i64 + 1) {
            for x in ((nx - 0.14 * sc) as i64)..=((nx + 0.14 * sc) as i64) {
                cv.plot(x, y, z0 - 10.0, style.clothing, labels::CLOTHING);
            }
        }

        // Head with two eyes.
        let (x0, y0, x1, y1) = cv.bounds(head.0, head.1, hay + 1.0);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let rho2 = ellipse_rho2(x as f64, y as f64, head.0, head.1, hax, hay, 0.0);
                if rho2 <= 1.0 {
                    let eye = [-1.0, 1.0].iter().any(|s| {
                        (x as f64 - head.0 - s * 0.4 * hax).hypot(y as f64 - head.1 + 0.2 * hay) < 0.12 * hax
                    });
                    if eye {
                        cv.plot(x, y, z0 - 45.0, [40.0, 30.0, 30.0], labels::EYE);
                    } else {
                        let c = style.skin.map(|v| v * (1.0 - 0.2 * rho2));
                        cv.plot(x, y, z0 - 40.0 - 20.0 * (1.0 - rho2), c, labels::FACE);
                    }
                }
            }
        }

        // Arms from shoulders to palm centres.
        let sleeve = style.clothing.map(|v| v * 0.85);
        let shoulders = [(nx - 0.5 * sc, ny + 0.08 * sc), (nx + 0.5 * sc, ny + 0.08 * sc)];
        for (hand, shoulder) in scene.hands.iter().zip(shoulders) {
            let radius = 0.11 * sc;
            let p1 = (hand.cx, hand.cy);
            let x0 = (shoulder.0.min(p1.0) - radius).floor().max(0.0) as i64;
            let x1 = ((shoulder.0.max(p1.0) + radius).ceil() as i64).min(w as i64 - 1);
            let y0 = (shoulder.1.min(p1.1) - radius).floor().max(0.0) as i64;
            let y1 = ((shoulder.1.max(p1.1) + radius).ceil() as i64).min(h as i64 - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let (d, t) = segment_distance(x as f64, y as f64, shoulder, p1);
                    if d <= radius {
                        let z = lerp(z0 - 30.0, hand.depth + 40.0, t);
                        cv.plot(x, y, z, sleeve, labels::ARM);
                    }
                }
            }
        }

        for (i, hand) in scene.hands.iter().enumerate() {
            let label = if i == RIGHT { labels::HAND_RIGHT } else { labels::HAND_LEFT };
            let (x0, y0, x1, y1) = cv.bounds(hand.cx, hand.cy, hand.reach());
            for y in y0..=y1 {
                for x in x0..=x1 {
                    if let Some(shade) = hand.shade(x as f64, y as f64) {
                        cv.plot(x, y, hand.depth, style.skin.map(|v| v * shade), label);
                    }
                }
            }
        }
        cv
    }

    /// Renders frame `t` of entry `index` without noise or mirroring.
    pub fn render_frame(&self, index: usize, t: usize) -> RenderedFrame {
        let keys = self.sample_keys(index);
        self.render_keys(index, &keys[t.min(keys.len() - 1)], None)
    }

    fn render_keys(&self, index: usize, keys: &[HandKey; 2], noise: Option<&mut ChaCha8Rng>) -> RenderedFrame {
        let (signer, _, _) = self.coordinates(index);
        let (w, h) = (self.spec.width, self.spec.height);
        let scene = self.scene(signer, keys);
        let cv = self.rasterize(signer, &scene);

        let mut color = RgbImage::new(w, h);
        let mut depth = DepthImage::new(w, h);
        let mut label_img = GrayImage::new(w, h);
        let mut tri = TriangularNoise::default();
        match noise {
            Some(rng) => {
                for i in 0..w * h {
                    let (x, y) = (i % w, i / w);
                    let c = cv.color[i];
                    let px = [0, 1, 2].map(|ch| {
                        (c[ch] + self.spec.pixel_noise * tri.sample(rng)).round().clamp(0.0, 255.0) as u8
                    });
                    color.put(x, y, px);
                    let d = cv.depth[i] + self.spec.depth_noise * tri.sample(rng);
                    depth.put(x, y, d.round().clamp(1.0, 65535.0) as u16);
                    label_img.put(x, y, cv.label[i]);
                }
            }
            None => {
                for i in 0..w * h {
                    let (x, y) = (i % w, i / w);
                    color.put(x, y, cv.color[i].map(|v| v.round().clamp(0.0, 255.0) as u8));
                    depth.put(x, y, cv.depth[i].round().clamp(1.0, 65535.0) as u16);
                    label_img.put(x, y, cv.label[i]);
                }
            }
        }

        let visible = |l: u8| {
            let mut px = Vec::new();
            for y in 0..h {
                for x in 0..w {
                    if label_img.get(x, y) == l {
                        px.push((x as i64, y as i64));
                    }
                }
            }
            BlobMask::from_pixels(&px)
        };
        let full = [scene.hands[0].full_mask(w, h), scene.hands[1].full_mask(w, h)];
        let touching = {
            let grown = grow(&full[0]);
            grown.intersection_area(&full[1]) > 0
        };
        let sc = scene.scale;
        let head_box = Rect::centered(
            scene.neck.0,
            scene.neck.1 - HEAD_DROP * sc,
            2.0 * HEAD_AXES.0 * sc,
            2.0 * HEAD_AXES.1 * sc,
        );
        let over_face = |m: &BlobMask| !m.is_empty() && m.bbox().intersects(&head_box);
        let truth = FrameTruth {
            hands: [
                HandTruth {
                    center: (scene.hands[0].cx, scene.hands[0].cy),
                    depth: scene.hands[0].depth,
                    visible: visible(labels::HAND_RIGHT),
                    full: full[0].clone(),
                },
                HandTruth {
                    center: (scene.hands[1].cx, scene.hands[1].cy),
                    depth: scene.hands[1].depth,
                    visible: visible(labels::HAND_LEFT),
                    full: full[1].clone(),
                },
            ],
            hand_over_hand: touching,
            hand_over_face: [over_face(&full[0]), over_face(&full[1])],
            head_box,
        };

        let pose = self.pose(&scene, keys);
        RenderedFrame {
            color,
            depth,
            labels: label_img,
            pose,
            truth,
        }
    }

    fn pose(&self, scene: &Scene, _keys: &[HandKey; 2]) -> SkeletonPose {
        let sc = scene.scale;
        let (nx, ny) = scene.neck;
        let z0 = scene.distance;
        let reading = |x: f64, y: f64, z: f64| JointReading {
            x,
            y,
            z,
            confidence: 1.0,
        };
        let mut pose = SkeletonPose::default();
        pose.joints.insert(Joint::Head, reading(nx, ny - HEAD_DROP * sc, z0 - 40.0));
        pose.joints.insert(Joint::Neck, reading(nx, ny, z0 - 10.0));
        pose.joints.insert(Joint::Torso, reading(nx, ny + sc, z0));
        pose.joints
            .insert(Joint::ShoulderRight, reading(nx - 0.5 * sc, ny + 0.08 * sc, z0 - 20.0));
        pose.joints
            .insert(Joint::ShoulderLeft, reading(nx + 0.5 * sc, ny + 0.08 * sc, z0 - 20.0));
        let hr = &scene.hands[RIGHT];
        let hl = &scene.hands[LEFT];
        pose.joints.insert(Joint::HandRight, reading(hr.cx, hr.cy, hr.depth));
        pose.joints.insert(Joint::HandLeft, reading(hl.cx, hl.cy, hl.depth));
        pose
    }

    /// Renders entry `index` with noise, skeleton jitter and mirroring for
    /// left-handed signers.
    pub fn render(&self, index: usize) -> SyntheticSample {
        let entry = self.manifest.entries[index].clone();
        let (signer, rep, class) = self.coordinates(index);
        let keys = self.sample_keys(index);
        let mut noise_rng = rng_for(self.seed, &[6, signer as u64, rep as u64, class as u64]);
        let mut skel_rng = rng_for(self.seed, &[7, signer as u64, rep as u64, class as u64]);
        let w = self.spec.width as f64;
        let h = self.spec.height as f64;

        let mut color = Vec::with_capacity(keys.len());
        let mut depth = Vec::with_capacity(keys.len());
        let mut skeleton = Vec::with_capacity(keys.len());
        let mut frames = Vec::with_capacity(keys.len());
        let span = self.shoulder_span(signer);
        for (t, k) in keys.iter().enumerate() {
            let mut f = self.render_keys(index, k, Some(&mut noise_rng));
            for (joint, r) in f.pose.joints.iter_mut() {
                let sigma = match joint {
                    Joint::HandLeft | Joint::HandRight => self.spec.skeleton_noise,
                    _ => 0.1 * self.spec.skeleton_noise,
                };
                r.x += sigma * gauss(&mut skel_rng);
                r.y += sigma * gauss(&mut skel_rng);
                let glitch = skel_rng.gen::<f64>();
                if matches!(joint, Joint::HandLeft | Joint::HandRight) && t >= 5 && self.spec.skeleton_noise > 0.0 && glitch < 0.05 {
                    let a = skel_rng.gen_range(0.0..2.0 * PI);
                    r.x += 0.3 * span * a.cos();
                    r.y += 0.3 * span * a.sin();
                    r.confidence = 0.5;
                }
                r.x = r.x.clamp(0.0, w - 1.0);
                r.y = r.y.clamp(0.0, h - 1.0);
            }
            color.push(f.color);
            depth.push(f.depth);
            skeleton.push(f.pose);
            frames.push(f.truth);
        }

        let mut sequence = FrameSequence {
            color,
            depth,
            skeleton,
            fps: self.spec.fps,
            focal: self.focal(),
            signer_id: entry.signer.clone(),
            sign_label: Some(entry.label.clone()),
            handedness: Handedness::Right,
        };
        let mut truth = SequenceTruth {
            frames,
            shoulder_span: span,
        };
        if entry.handedness == Handedness::Left {
            sequence = mirror_sequence(&sequence);
            truth = mirror_truth(&truth, self.spec.width);
        }
        SyntheticSample {
            entry,
            sequence,
            truth,
        }
    }

    /// Writes the manifest, every sequence directory and per-sequence ground
    /// truth (`truth.txt` plus `truth_%06d.pgm` hand label images).
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        use rayon::prelude::*;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.manifest.save(&dir.join("manifest.tsv"))?;
        (0..self.len()).into_par_iter().try_for_each(|i| {
            let sample = self.render(i);
            let sdir = dir.join(&sample.entry.path);
            save_sequence(&sample.sequence, &sdir)?;
            write_truth(&sample.truth, self.spec.width, self.spec.height, &sdir)
        })
    }
}

fn grow(m: &BlobMask) -> BlobMask {
    let mut px = Vec::new();
    for (x, y) in m.pixels() {
        for dy in -1..=1 {
            for dx in -1..=1 {
                px.push((x + dx, y + dy));
            }
        }
    }
    BlobMask::from_pixels(&px)
}

fn mirror_blob(m: &BlobMask, width: usize) -> BlobMask {
    let px: Vec<(i64, i64)> = m.pixels().map(|(x, y)| (width as i64 - 1 - x, y)).collect();
    BlobMask::from_pixels(&px)
}

fn mirror_truth(truth: &SequenceTruth, width: usize) -> SequenceTruth {
    let w = width as f64;
    let hand = |h: &HandTruth| HandTruth {
        center: (w - 1.0 - h.center.0, h.center.1),
        depth: h.depth,
        visible: mirror_blob(&h.visible, width),
        full: mirror_blob(&h.full, width),
    };
    SequenceTruth {
        frames: truth
            .frames
            .iter()
            .map(|f| FrameTruth {
                hands: [hand(&f.hands[LEFT]), hand(&f.hands[RIGHT])],
                hand_over_hand: f.hand_over_hand,
                hand_over_face: [f.hand_over_face[LEFT], f.hand_over_face[RIGHT]],
                head_box: Rect {
                    x: w - f.head_box.right(),
                    ..f.head_box
                },
            })
            .collect(),
        shoulder_span: truth.shoulder_span,
    }
}

fn write_truth(truth: &SequenceTruth, width: usize, height: usize, dir: &Path) -> Result<()> {
    let mut text = format!("# shoulder_span={}\n# right_x right_y right_depth left_x left_y left_depth hand_over_hand face_right face_left\n", truth.shoulder_span);
    for (t, f) in truth.frames.iter().enumerate() {
        let [r, l] = &f.hands;
        text.push_str(&format!(
            "{} {} {} {} {} {} {} {} {}\n",
            r.center.0,
            r.center.1,
            r.depth,
            l.center.0,
            l.center.1,
            l.depth,
            f.hand_over_hand as u8,
            f.hand_over_face[RIGHT] as u8,
            f.hand_over_face[LEFT] as u8
        ));
        let mut img = GrayImage::new(width, height);
        for (value, hand) in [(1u8, r), (2u8, l)] {
            for (x, y) in hand.visible.pixels() {
                img.put(x as usize, y as usize, value);
            }
        }
        write_pgm8(&dir.join(format!("truth_{t:06}.pgm")), &img)?;
    }
    let path = dir.join("truth.txt");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Triangular noise with unit variance, four draws per 64-bit word.
#[derive(Default)]
struct TriangularNoise {
    word: u64,
    left: u32,
}

impl TriangularNoise {
    #[inline]
    fn sample(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        if self.left == 0 {
            self.word = rng.gen();
            self.left = 4;
        }
        let a = (self.word & 0xff) as f64;
        let b = ((self.word >> 8) & 0xff) as f64;
        self.word >>= 16;
        self.left -= 1;
        // Sum of two uniform bytes has variance 2 * (256^2 - 1) / 12.
        (a + b - 255.0) / 104.5
    }
}

/// Labelled pixels drawn from broad skin and non-skin colour distributions,
/// standing in for a generic skin-colour corpus.
pub fn skin_training_pixels(seed: u64, count: usize) -> Vec<([u8; 3], bool)> {
    let mut rng = rng_for(seed, &[8]);
    (0..count)
        .map(|i| {
            if i % 3 == 0 {
                let red = rng.gen_range(150.0..240.0);
                let base = [red, red * rng.gen_range(0.62..0.78), red * rng.gen_range(0.48..0.66)];
                let lum = rng.gen_range(0.45..1.1);
                let px = base.map(|v: f64| (v * lum + 3.0 * gauss(&mut rng)).round().clamp(0.0, 255.0) as u8);
                (px, true)
            } else if i % 3 == 1 {
                let base = if rng.gen_bool(0.7) {
                    CLOTHING[rng.gen_range(0..CLOTHING.len())]
                } else {
                    WALLS[rng.gen_range(0..WALLS.len())]
                };
                let lum = rng.gen_range(0.5..1.3);
                let px = base.map(|v| (v * lum + 4.0 * gauss(&mut rng)).round().clamp(0.0, 255.0) as u8);
                (px, false)
            } else {
                ([rng.gen(), rng.gen(), rng.gen()], false)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            classes: 3,
            signers: 2,
            samples_per_signer: 1,
            width: 160,
            height: 120,
            active_frames: 10,
            length_jitter: 2,
            max_idle_frames: 2,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn counts_entries() {
        let spec = SynthSpec {
            classes: 10,
            signers: 4,
            samples_per_signer: 6,
            ..SynthSpec::default()
        };
        let corpus = generate_synthetic_corpus(&spec, 1).unwrap();
        assert_eq!(corpus.manifest.entries.len(), 240);
        assert_eq!(corpus.manifest.vocabulary.len(), 10);
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(generate_synthetic_corpus(&SynthSpec { classes: 1, ..small_spec() }, 0).is_err());
        assert!(generate_synthetic_corpus(&SynthSpec { samples_per_signer: 0, ..small_spec() }, 0).is_err());
    }

    #[test]
    fn same_seed_renders_identically() {
        let corpus = generate_synthetic_corpus(&small_spec(), 7).unwrap();
        let a = corpus.render(4);
        let b = generate_synthetic_corpus(&small_spec(), 7).unwrap().render(4);
        assert_eq!(a.sequence, b.sequence);
        assert_eq!(a.truth, b.truth);
        let c = generate_synthetic_corpus(&small_spec(), 8).unwrap().render(4);
        assert_ne!(a.sequence.color, c.sequence.color);
    }

    #[test]
    fn write_to_is_byte_identical_across_runs() {
        let spec = small_spec();
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        generate_synthetic_corpus(&spec, 3).unwrap().write_to(d1.path()).unwrap();
        generate_synthetic_corpus(&spec, 3).unwrap().write_to(d2.path()).unwrap();
        let mut files: Vec<_> = walk(d1.path());
        files.sort();
        assert!(files.len() > 20);
        for f in files {
            let rel = f.strip_prefix(d1.path()).unwrap();
            assert_eq!(std::fs::read(&f).unwrap(), std::fs::read(d2.path().join(rel)).unwrap(), "{rel:?}");
        }
    }

    fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
        let mut out = Vec::new();
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                out.extend(walk(&p));
            } else {
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn noiseless_centroid_follows_trajectory() {
        let spec = SynthSpec {
            trajectory_noise: 0.0,
            pixel_noise: 0.0,
            depth_noise: 0.0,
            skeleton_noise: 0.0,
            hand_detail: false,
            left_handed_signers: 0,
            ..small_spec()
        };
        let corpus = generate_synthetic_corpus(&spec, 11).unwrap();
        let sample = corpus.render(1);
        for f in &sample.truth.frames {
            for hand in &f.hands {
                let (cx, cy) = hand.full.centroid().unwrap();
                assert!((cx - hand.center.0).hypot(cy - hand.center.1) <= 1.0);
            }
        }
    }

    #[test]
    fn left_handed_sample_mirrors_back_to_template() {
        let spec = SynthSpec {
            signers: 1,
            left_handed_signers: 1,
            ..small_spec()
        };
        let corpus = generate_synthetic_corpus(&spec, 5).unwrap();
        let sample = corpus.render(0);
        assert_eq!(sample.sequence.handedness, Handedness::Left);
        let restored = mirror_sequence(&sample.sequence);
        // The template trajectory is the unmirrored right-hand path.
        let keys = corpus.sample_keys(0);
        let span = corpus.shoulder_span(0);
        let neck = restored.skeleton[0].get(Joint::Neck).unwrap();
        let _ = neck;
        let right_truth = mirror_truth(&sample.truth, spec.width);
        for (t, k) in keys.iter().enumerate() {
            let c = right_truth.frames[t].hands[RIGHT].center;
            let expected_x = spec.width as f64 * (0.5 + corpus.signers[0].neck_dx) + k[0].u * span;
            assert!((c.0 - expected_x).abs() < 1e-9);
        }
        let hand = restored.skeleton[3].get(Joint::HandRight).unwrap();
        let c = right_truth.frames[3].hands[RIGHT].center;
        assert!((hand.x - c.0).abs() < 20.0);
    }

    #[test]
    fn configured_shoulder_span_matches_skeleton() {
        let corpus = generate_synthetic_corpus(&small_spec(), 2).unwrap();
        let s = corpus.render(0);
        let d = super::super::shoulder_distance(&s.sequence, 5).unwrap();
        assert!((d - s.truth.shoulder_span).abs() <= 1.0, "{d} vs {}", s.truth.shoulder_span);
    }

    #[test]
    fn depth_only_pairs_share_image_trajectory() {
        let spec = SynthSpec {
            classes: 4,
            depth_only_pairs: 1,
            crossing_classes: 0,
            ..small_spec()
        };
        let corpus = generate_synthetic_corpus(&spec, 9).unwrap();
        let (a, b) = (&corpus.classes[2], &corpus.classes[3]);
        for (p, q) in a.right.iter().zip(&b.right) {
            assert_eq!((p.u, p.v, p.aspect), (q.u, q.v, q.aspect));
            assert!((p.w - q.w).abs() >= 170.0);
        }
    }

    #[test]
    fn skin_pixels_have_both_labels() {
        let px = skin_training_pixels(0, 300);
        assert_eq!(px.iter().filter(|p| p.1).count(), 100);
    }
}
