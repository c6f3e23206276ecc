//! Per-sequence hand segmentation and tracking.

use crate::config::Config;
use crate::dataio::synth::skin_training_pixels;
use crate::dataio::{shoulder_distance, FrameSequence, Joint, LEFT, RIGHT};
use crate::error::{Error, Result};
use crate::image::{BlobMask, GrayImage, Mask, Rect};
use crate::segmentation::{
    clean_mask, label, median_depth, motion_mask, rank_and_assign, resolve_face_occlusion, resolve_hand_over_hand,
    skin_mask, update_adaptive_model, Candidate, FaceDepthModel, HandObservation, HandPrediction, Occlusion,
    SkinHistogram,
};
use crate::tracking::{detect_overlap, search_window, HandTrack, Measurement};

/// Seed of the built-in labelled skin pixel set.
pub const GENERAL_SKIN_SEED: u64 = 0x5EED;

/// General skin model trained on the built-in labelled pixel set.
pub fn general_skin_model(bins: usize) -> SkinHistogram {
    SkinHistogram::from_pixels(bins, skin_training_pixels(GENERAL_SKIN_SEED, 60_000))
}

/// Initial hand box side and first-frame search window side, in shoulder
/// widths.
const INITIAL_BOX: f64 = 0.35;
const INITIAL_WINDOW: f64 = 0.8;
/// Face box size in shoulder widths around the head joint.
const FACE_BOX: (f64, f64) = (0.62, 0.8);

/// Tracking result for one hand in one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct HandFrame {
    pub observation: HandObservation,
    /// Filtered centroid after the measurement update.
    pub position: (f64, f64),
    /// Filtered velocity (px/frame).
    pub velocity: (f64, f64),
    pub search_window: Rect,
}

/// Intermediate masks kept for debugging.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameDebug {
    pub skin: Mask,
    pub motion: Mask,
    pub candidates: Mask,
    pub hands: Mask,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameTrace {
    /// Indexed by [`RIGHT`] / [`LEFT`].
    pub hands: [HandFrame; 2],
    pub overlap: bool,
    pub face_box: Rect,
    pub debug: Option<FrameDebug>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceTrace {
    pub frames: Vec<FrameTrace>,
    pub shoulder_distance: f64,
}

fn hand_joint(h: usize) -> Joint {
    if h == RIGHT {
        Joint::HandRight
    } else {
        Joint::HandLeft
    }
}

fn touches(mask: &BlobMask, window: &Rect) -> bool {
    mask.bbox().intersects(window) && mask.pixels().any(|(x, y)| window.covers_pixel(x, y))
}

fn body_mask(seq: &FrameSequence, t: usize, cfg: &Config) -> Result<Mask> {
    let torso = seq.skeleton[t]
        .get(Joint::Torso)
        .ok_or_else(|| Error::InvalidInput(format!("frame {t}: missing torso joint")))?;
    let (lo, hi) = (torso.z - cfg.segmentation.body_front, torso.z + cfg.segmentation.body_behind);
    let depth = &seq.depth[t];
    Ok(Mask::from_fn(depth.width(), depth.height(), |x, y| {
        let d = depth.get(x, y);
        d > 0 && (d as f64) >= lo && (d as f64) <= hi
    }))
}

/// Runs segmentation and tracking over every frame of `seq`.
pub fn track_sequence(seq: &FrameSequence, general: &SkinHistogram, cfg: &Config, keep_debug: bool) -> Result<SequenceTrace> {
    seq.validate()?;
    let sc = &cfg.segmentation;
    let tc = &cfg.tracking;
    let (w, h) = (seq.width(), seq.height());
    let sd = shoulder_distance(seq, cfg.features.shoulder_frames)?;

    let first = &seq.skeleton[0];
    let torso_z = first.get(Joint::Torso).map_or(0.0, |j| j.z);
    let seed_position = |t: usize, hand: usize| -> ((f64, f64), f64) {
        let pose = &seq.skeleton[t];
        match pose.get(hand_joint(hand)) {
            Some(j) => ((j.x, j.y), j.z),
            None => {
                let torso = pose.get(Joint::Torso).expect("validated");
                ((torso.x, torso.y), torso.z)
            }
        }
    };
    let box_side = INITIAL_BOX * sd;
    let mut tracks: [HandTrack; 2] = [RIGHT, LEFT].map(|hand| {
        let (p, _) = seed_position(0, hand);
        HandTrack::new(p, (box_side, box_side), tc)
    });
    let mut last_depth: [f64; 2] = [RIGHT, LEFT].map(|hand| {
        let (_, z) = seed_position(0, hand);
        if z > 0.0 {
            z
        } else {
            torso_z
        }
    });
    let mut templates: [Option<BlobMask>; 2] = [None, None];
    let mut model: Option<SkinHistogram> = None;
    let mut face_model: Option<FaceDepthModel> = None;
    let mut prev_gray: Option<GrayImage> = None;
    let mut frames = Vec::with_capacity(seq.len());

    for t in 0..seq.len() {
        let color = &seq.color[t];
        let depth = &seq.depth[t];
        let pose = &seq.skeleton[t];
        let gray = color.to_gray();
        let body = body_mask(seq, t, cfg)?;

        if t == 0 {
            let bootstrap = skin_mask(color, general, sc.skin_threshold, Some(&body));
            if !bootstrap.is_empty() {
                model = Some(update_adaptive_model(
                    general,
                    labelled_pixels(color, &body, &bootstrap, None),
                    sc.alpha,
                ));
            }
        }
        let active_model = model.as_ref().unwrap_or(general);
        let skin = skin_mask(color, active_model, sc.skin_threshold, Some(&body));

        let head = pose.get(Joint::Head).or_else(|| pose.get(Joint::Neck)).expect("validated");
        let face_box = Rect::centered(head.x, head.y, FACE_BOX.0 * sd, FACE_BOX.1 * sd);
        let reinit = match &face_model {
            None => true,
            Some(m) => {
                let (cx, cy) = m.region().center();
                let (fx, fy) = face_box.clamp_to(w, h).center();
                (cx - fx).hypot(cy - fy) > 0.25 * face_box.w
            }
        };
        if reinit {
            face_model = Some(FaceDepthModel::new(face_box, depth));
        }
        let fm = face_model.as_mut().expect("initialised");
        let foreground = resolve_face_occlusion(depth, fm, sc.face_depth_threshold, sc.face_update_rate);
        let region = fm.region();
        let cleaned = Mask::from_fn(w, h, |x, y| {
            skin.get(x, y) && (!region.covers_pixel(x as i64, y as i64) || foreground.get(x, y))
        });

        let motion = match &prev_gray {
            Some(prev) => motion_mask(&gray, prev, sc.motion_threshold),
            None => Mask::new(w, h),
        };
        let components: Vec<BlobMask> = label(&cleaned)
            .into_iter()
            .filter(|b| b.area() >= sc.min_area)
            .collect();
        let seeds = if t > 0 {
            clean_mask(&cleaned, &motion, sc.min_area)
        } else {
            Vec::new()
        };

        let predicted: [HandTrack; 2] = if t == 0 {
            tracks.clone()
        } else {
            [tracks[0].predict(), tracks[1].predict()]
        };
        let mut windows: [Rect; 2] = if t == 0 {
            predicted.clone().map(|p| {
                let (x, y) = p.position();
                Rect::centered(x, y, INITIAL_WINDOW * sd, INITIAL_WINDOW * sd).clamp_to(w, h)
            })
        } else {
            [
                search_window(&predicted[0], tc, sd, w, h),
                search_window(&predicted[1], tc, sd, w, h),
            ]
        };

        // A hand whose window holds no skin is searched for again around its
        // skeleton joint.
        let mut centers: [(f64, f64); 2] = [predicted[0].position(), predicted[1].position()];
        for hand in [RIGHT, LEFT] {
            if !components.iter().any(|c| touches(c, &windows[hand])) {
                let (p, _) = seed_position(t, hand);
                centers[hand] = p;
                windows[hand] = Rect::centered(p.0, p.1, INITIAL_WINDOW * sd, INITIAL_WINDOW * sd).clamp_to(w, h);
            }
        }

        let moving: Vec<bool> = components
            .iter()
            .map(|c| seeds.iter().any(|s| s.intersection_area(c) > 0))
            .collect();
        let mut selected: Vec<usize> = (0..components.len())
            .filter(|&i| moving[i] && windows.iter().any(|win| touches(&components[i], win)))
            .collect();
        for win in &windows {
            if !selected.iter().any(|&i| touches(&components[i], win)) {
                for i in 0..components.len() {
                    if !selected.contains(&i) && touches(&components[i], win) {
                        selected.push(i);
                    }
                }
            }
        }
        selected.sort_unstable();
        let cand_masks: Vec<BlobMask> = selected.iter().map(|&i| components[i].clone()).collect();
        let overlap = t > 0 && detect_overlap([&windows[0], &windows[1]], &cand_masks, sc.min_area);

        let predictions: [HandPrediction; 2] = [0, 1].map(|hand| HandPrediction {
            center: centers[hand],
            depth: last_depth[hand],
            size: predicted[hand].size(),
            window: windows[hand],
        });

        let observations: [HandObservation; 2] = match (overlap, &templates) {
            (true, [Some(tr), Some(tl)]) => {
                let joint = cand_masks
                    .iter()
                    .find(|b| b.area() >= sc.min_area && windows.iter().any(|win| touches(b, win)))
                    .expect("overlap implies one blob");
                let centers = [predictions[0].center, predictions[1].center];
                match resolve_hand_over_hand(joint, [tr, tl], centers) {
                    Some(placements) => placements.map(|p| {
                        let inside: Vec<(i64, i64)> = p.mask.pixels().filter(|&(x, y)| joint.contains(x, y)).collect();
                        let d = median_depth(&BlobMask::from_pixels(&inside), depth).unwrap_or(f64::NAN);
                        let mut o = HandObservation::from_blob(p.mask, d, Occlusion::HandOverHand);
                        o.centroid = p.centroid;
                        o
                    }),
                    None => [0, 1].map(|hand| {
                        let tpl = if hand == RIGHT { tr } else { tl };
                        let c = tpl.centroid().unwrap_or_default();
                        let (px, py) = centers[hand];
                        let moved = tpl.translated((px - c.0).round() as i64, (py - c.1).round() as i64);
                        let d = median_depth(joint, depth).unwrap_or(last_depth[hand]);
                        let mut o = HandObservation::from_blob(moved, d, Occlusion::HandOverHand);
                        o.centroid = (px, py);
                        o
                    }),
                }
            }
            _ => {
                let cands: Vec<Candidate> = cand_masks
                    .iter()
                    .map(|m| Candidate {
                        depth: median_depth(m, depth).unwrap_or(f64::INFINITY),
                        mask: m.clone(),
                    })
                    .collect();
                let assignment = rank_and_assign(&cands, &predictions, overlap, sc);
                let shared = assignment[0].is_some() && assignment[0] == assignment[1];
                [0, 1].map(|hand| match assignment[hand] {
                    Some(i) => {
                        let c = &cands[i];
                        let occlusion = if shared {
                            Occlusion::HandOverHand
                        } else if c.mask.bbox().intersects(&face_box) {
                            Occlusion::HandOverFace
                        } else {
                            Occlusion::None
                        };
                        HandObservation::from_blob(c.mask.clone(), c.depth, occlusion)
                    }
                    None => HandObservation::missing(predictions[hand].center, predictions[hand].size, last_depth[hand]),
                })
            }
        };

        let mut hands = Vec::with_capacity(2);
        for hand in [RIGHT, LEFT] {
            let obs = &observations[hand];
            let mut track = if obs.missing {
                predicted[hand].coasted()
            } else {
                let size = if obs.shape_frozen {
                    templates[hand]
                        .as_ref()
                        .map_or(predicted[hand].size(), |tpl| (tpl.width() as f64, tpl.height() as f64))
                } else {
                    (obs.bbox.w, obs.bbox.h)
                };
                predicted[hand].update(&Measurement {
                    centroid: obs.centroid,
                    size,
                })
            };
            if track.coast_count > tc.max_coast {
                let (p, z) = seed_position(t, hand);
                track = HandTrack::new(p, (box_side, box_side), tc);
                if z > 0.0 {
                    last_depth[hand] = z;
                }
            }
            // Inside a joint blob the measured depth mostly belongs to the
            // front hand, so both depth and template keep their last
            // unoccluded values.
            if !obs.missing && obs.occlusion != Occlusion::HandOverHand {
                if obs.depth.is_finite() {
                    last_depth[hand] = obs.depth;
                }
                templates[hand] = Some(obs.mask.clone());
            }
            hands.push(HandFrame {
                observation: obs.clone(),
                position: track.position(),
                velocity: track.velocity(),
                search_window: windows[hand],
            });
            tracks[hand] = track;
        }

        let mut hand_mask = Mask::new(w, h);
        for o in &observations {
            o.mask.paint(&mut hand_mask);
        }
        if let Some(m) = model.take() {
            let hand_or_face = Mask::from_fn(w, h, |x, y| hand_mask.get(x, y) || face_box.covers_pixel(x as i64, y as i64));
            model = Some(update_adaptive_model(
                &m,
                labelled_pixels(color, &body, &skin, Some(&hand_or_face)),
                sc.alpha,
            ));
        }

        let debug = keep_debug.then(|| {
            let mut candidates = Mask::new(w, h);
            for c in &cand_masks {
                c.paint(&mut candidates);
            }
            FrameDebug {
                skin: cleaned.clone(),
                motion: motion.clone(),
                candidates,
                hands: hand_mask.clone(),
            }
        });
        let [right, left]: [HandFrame; 2] = hands.try_into().expect("two hands");
        frames.push(FrameTrace {
            hands: [right, left],
            overlap,
            face_box,
            debug,
        });
        prev_gray = Some(gray);
    }
    Ok(SequenceTrace {
        frames,
        shoulder_distance: sd,
    })
}

/// Body pixels labelled skin where `skin` is set (and inside `restrict` if
/// given) and non-skin where it is not.
fn labelled_pixels<'a>(
    color: &'a crate::image::RgbImage,
    body: &'a Mask,
    skin: &'a Mask,
    restrict: Option<&'a Mask>,
) -> impl Iterator<Item = ([u8; 3], bool)> + 'a {
    let (w, h) = (color.width(), color.height());
    (0..h).flat_map(move |y| (0..w).map(move |x| (x, y))).filter_map(move |(x, y)| {
        if !body.get(x, y) {
            return None;
        }
        if skin.get(x, y) {
            restrict.is_none_or(|r| r.get(x, y)).then(|| (color.get(x, y), true))
        } else {
            Some((color.get(x, y), false))
        }
    })
}

/// Agreement of a trace with rendered ground truth.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SegmentationScore {
    /// Per-hand IoU over frames where that hand is unoccluded.
    pub ious: Vec<f64>,
    /// Centroid errors (px) over hand-over-hand frames, both hands.
    pub occluded_errors: Vec<f64>,
}

impl SegmentationScore {
    pub fn merge(&mut self, other: SegmentationScore) {
        self.ious.extend(other.ious);
        self.occluded_errors.extend(other.occluded_errors);
    }

    pub fn mean_iou(&self) -> f64 {
        mean(&self.ious)
    }

    pub fn mean_occluded_error(&self) -> f64 {
        mean(&self.occluded_errors)
    }

    pub fn max_occluded_error(&self) -> f64 {
        self.occluded_errors.iter().cloned().fold(0.0, f64::max)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn score_against_truth(trace: &SequenceTrace, truth: &crate::dataio::synth::SequenceTruth) -> SegmentationScore {
    let mut score = SegmentationScore::default();
    for (f, tf) in trace.frames.iter().zip(&truth.frames) {
        for hand in [RIGHT, LEFT] {
            let obs = &f.hands[hand].observation;
            let gt = &tf.hands[hand];
            if tf.hand_over_hand {
                let (x, y) = obs.centroid;
                score.occluded_errors.push((x - gt.center.0).hypot(y - gt.center.1));
            } else if !tf.hand_over_face[hand] {
                score.ious.push(if obs.missing { 0.0 } else { obs.mask.iou(&gt.visible) });
            }
        }
    }
    score
}
