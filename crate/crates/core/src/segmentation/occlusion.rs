use crate::image::{BlobMask, DepthImage, Mask, Rect};

/// Per-pixel depth of the face region, learned while no hand covers it.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceDepthModel {
    x0: usize,
    y0: usize,
    width: usize,
    height: usize,
    depth: Vec<f64>,
    valid: Vec<bool>,
}

impl FaceDepthModel {
    /// Initialises the model from `frame` inside `region` (clipped to the
    /// frame).
    pub fn new(region: Rect, frame: &DepthImage) -> Self {
        let r = region.clamp_to(frame.width(), frame.height());
        let x0 = r.x.floor() as usize;
        let y0 = r.y.floor() as usize;
        let x1 = (r.right().ceil() as usize).min(frame.width());
        let y1 = (r.bottom().ceil() as usize).min(frame.height());
        let (width, height) = (x1.saturating_sub(x0), y1.saturating_sub(y0));
        let mut depth = Vec::with_capacity(width * height);
        let mut valid = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            for x in x0..x0 + width {
                let d = frame.get(x, y);
                depth.push(d as f64);
                valid.push(d > 0);
            }
        }
        Self {
            x0,
            y0,
            width,
            height,
            depth,
            valid,
        }
    }

    pub fn region(&self) -> Rect {
        Rect {
            x: self.x0 as f64,
            y: self.y0 as f64,
            w: self.width as f64,
            h: self.height as f64,
        }
    }

    /// Model depth at a frame pixel, if inside the region and valid.
    pub fn depth_at(&self, x: usize, y: usize) -> Option<f64> {
        if x < self.x0 || y < self.y0 || x >= self.x0 + self.width || y >= self.y0 + self.height {
            return None;
        }
        let i = (y - self.y0) * self.width + (x - self.x0);
        self.valid[i].then_some(self.depth[i])
    }
}

/// Marks pixels in the face region that lie more than `threshold` mm in front
/// of the face model, then blends the remaining valid pixels into the model
/// at `rate`. Pixels without a depth reading are neither marked nor learned.
pub fn resolve_face_occlusion(frame: &DepthImage, model: &mut FaceDepthModel, threshold: f64, rate: f64) -> Mask {
    let mut mask = Mask::new(frame.width(), frame.height());
    for ly in 0..model.height {
        for lx in 0..model.width {
            let (x, y) = (model.x0 + lx, model.y0 + ly);
            let d = frame.get(x, y);
            if d == 0 {
                continue;
            }
            let i = ly * model.width + lx;
            let d = d as f64;
            if model.valid[i] && model.depth[i] - d > threshold {
                mask.set(x, y, true);
            } else if model.valid[i] {
                model.depth[i] = (1.0 - rate) * model.depth[i] + rate * d;
            } else {
                model.depth[i] = d;
                model.valid[i] = true;
            }
        }
    }
    mask
}

/// A stored hand shape placed inside a merged blob.
#[derive(Clone, Debug, PartialEq)]
pub struct Placement {
    pub mask: BlobMask,
    pub centroid: (f64, f64),
    /// Fraction of the template covered by the joint blob.
    pub overlap: f64,
}

fn place(joint: &BlobMask, template: &BlobMask, prediction: (f64, f64)) -> Option<Placement> {
    let tc = template.centroid()?;
    let tpx: Vec<(i64, i64)> = template.pixels().collect();
    let (jx, jy) = joint.origin();
    let (tx, ty) = template.origin();
    let (jw, jh) = (joint.width() as i64, joint.height() as i64);
    let (tw, th) = (template.width() as i64, template.height() as i64);
    let mut best: Option<(usize, f64, i64, i64)> = None;
    for dy in (jy - ty - th + 1)..=(jy + jh - 1 - ty) {
        for dx in (jx - tx - tw + 1)..=(jx + jw - 1 - tx) {
            let hits = tpx.iter().filter(|&&(x, y)| joint.contains(x + dx, y + dy)).count();
            if hits == 0 {
                continue;
            }
            let dist = (tc.0 + dx as f64 - prediction.0).hypot(tc.1 + dy as f64 - prediction.1);
            let better = match best {
                None => true,
                Some((h, d, _, _)) => hits > h || (hits == h && dist < d),
            };
            if better {
                best = Some((hits, dist, dx, dy));
            }
        }
    }
    let (hits, _, dx, dy) = best?;
    Some(Placement {
        mask: template.translated(dx, dy),
        centroid: (tc.0 + dx as f64, tc.1 + dy as f64),
        overlap: hits as f64 / tpx.len() as f64,
    })
}

/// Slides each stored pre-occlusion shape over the merged blob and keeps the
/// placement with the largest covered fraction, breaking ties by distance to
/// the predicted centroid. Returns `None` when the merged blob is smaller
/// than either template, in which case callers fall back to predictions.
pub fn resolve_hand_over_hand(
    joint: &BlobMask,
    templates: [&BlobMask; 2],
    predictions: [(f64, f64); 2],
) -> Option<[Placement; 2]> {
    let area = joint.area();
    if templates.iter().any(|t| t.is_empty() || t.area() > area) {
        return None;
    }
    let a = place(joint, templates[0], predictions[0])?;
    let b = place(joint, templates[1], predictions[1])?;
    Some([a, b])
}
