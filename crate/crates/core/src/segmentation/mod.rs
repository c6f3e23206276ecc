//! Hand segmentation: skin colour, motion, morphology, blob ranking and
//! occlusion handling.

mod assign;
mod morphology;
mod occlusion;
mod skin;

pub use assign::{rank_and_assign, score_blob, Candidate, HandPrediction};
pub use morphology::{clean_mask, dilate, erode, label, motion_mask, open_and_label};
pub use occlusion::{resolve_face_occlusion, resolve_hand_over_hand, FaceDepthModel, Placement};
pub use skin::{rg_normalize, skin_mask, update_adaptive_model, SkinHistogram};

use crate::image::{BlobMask, DepthImage, Rect};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Occlusion {
    None,
    HandOverHand,
    HandOverFace,
}

/// Segmented hand in one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct HandObservation {
    pub mask: BlobMask,
    pub bbox: Rect,
    pub centroid: (f64, f64),
    /// Median depth of the blob (mm).
    pub depth: f64,
    pub occlusion: Occlusion,
    /// Shape descriptors should be carried over from the last unoccluded frame.
    pub shape_frozen: bool,
    /// No blob was assigned; position comes from the tracker.
    pub missing: bool,
}

impl HandObservation {
    pub fn from_blob(mask: BlobMask, depth: f64, occlusion: Occlusion) -> Self {
        let centroid = mask.centroid().unwrap_or_default();
        Self {
            bbox: mask.bbox(),
            centroid,
            depth,
            occlusion,
            shape_frozen: occlusion == Occlusion::HandOverHand,
            missing: false,
            mask,
        }
    }

    pub fn missing(centroid: (f64, f64), size: (f64, f64), depth: f64) -> Self {
        Self {
            mask: BlobMask::default(),
            bbox: Rect::centered(centroid.0, centroid.1, size.0, size.1),
            centroid,
            depth,
            occlusion: Occlusion::None,
            shape_frozen: false,
            missing: true,
        }
    }
}

/// Median of the valid depth readings under a blob.
pub fn median_depth(blob: &BlobMask, depth: &DepthImage) -> Option<f64> {
    let (w, h) = (depth.width() as i64, depth.height() as i64);
    let mut values: Vec<u16> = blob
        .pixels()
        .filter(|&(x, y)| x >= 0 && y >= 0 && x < w && y < h)
        .map(|(x, y)| depth.get(x as usize, y as usize))
        .filter(|&d| d > 0)
        .collect();
    if values.is_empty() {
        return None;
    }
    values.sort_unstable();
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        0.5 * (values[n / 2 - 1] as f64 + values[n / 2] as f64)
    })
}
