use crate::config::SegmentationConfig;
use crate::image::{BlobMask, Rect};

/// A skin blob with its median depth.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub mask: BlobMask,
    pub depth: f64,
}

/// Where the tracker expects a hand in the current frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HandPrediction {
    pub center: (f64, f64),
    pub depth: f64,
    /// Predicted bounding-box size (w, h).
    pub size: (f64, f64),
    pub window: Rect,
}

/// Weighted depth, size and proximity score in `[0, 1]`.
pub fn score_blob(c: &Candidate, p: &HandPrediction, cfg: &SegmentationConfig) -> f64 {
    let depth = (1.0 - (c.depth - p.depth).abs() / cfg.depth_scale).clamp(0.0, 1.0);
    let area = c.mask.area() as f64;
    // An ellipse fills pi/4 of its bounding box.
    let expected = (p.size.0 * p.size.1 * std::f64::consts::FRAC_PI_4).max(1.0);
    let size = if area > 0.0 {
        (area / expected).min(expected / area)
    } else {
        0.0
    };
    let proximity = match c.mask.centroid() {
        Some((x, y)) => {
            let radius = 0.5 * p.window.w.hypot(p.window.h);
            let d = (x - p.center.0).hypot(y - p.center.1);
            if radius > 0.0 {
                (1.0 - d / radius).clamp(0.0, 1.0)
            } else {
                0.0
            }
        }
        None => 0.0,
    };
    let total = cfg.weight_depth + cfg.weight_size + cfg.weight_proximity;
    (cfg.weight_depth * depth + cfg.weight_size * size + cfg.weight_proximity * proximity) / total
}

fn canonical_order(cands: &[Candidate]) -> Vec<usize> {
    let keys: Vec<(Vec<(i64, i64)>, u64)> = cands
        .iter()
        .map(|c| (c.mask.pixels().collect(), c.depth.to_bits()))
        .collect();
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    order
}

fn touches(mask: &BlobMask, window: &Rect) -> bool {
    mask.bbox().intersects(window) && mask.pixels().any(|(x, y)| window.covers_pixel(x, y))
}

/// Picks the blob for each hand (`[right, left]`) maximising the summed
/// score. A hand only considers blobs reaching into its search window that
/// score at least the minimum; a blob may serve both hands only when
/// `overlap` is set.
pub fn rank_and_assign(
    cands: &[Candidate],
    predictions: &[HandPrediction; 2],
    overlap: bool,
    cfg: &SegmentationConfig,
) -> [Option<usize>; 2] {
    let order = canonical_order(cands);
    let scores: Vec<[f64; 2]> = order
        .iter()
        .map(|&i| [score_blob(&cands[i], &predictions[0], cfg), score_blob(&cands[i], &predictions[1], cfg)])
        .collect();
    let options = |hand: usize| -> Vec<Option<usize>> {
        std::iter::once(None)
            .chain(
                (0..order.len())
                    .filter(|&k| scores[k][hand] >= cfg.min_score && touches(&cands[order[k]].mask, &predictions[hand].window))
                    .map(Some),
            )
            .collect()
    };
    let (right, left) = (options(0), options(1));
    let mut best = ([None, None], 0.0);
    for &r in &right {
        for &l in &left {
            if r.is_some() && r == l && !overlap {
                continue;
            }
            let total = r.map_or(0.0, |k| scores[k][0]) + l.map_or(0.0, |k| scores[k][1]);
            if total > best.1 {
                best = ([r, l], total);
            }
        }
    }
    best.0.map(|k| k.map(|k| order[k]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square(cx: i64, cy: i64, r: i64) -> BlobMask {
        let px: Vec<_> = (cy - r..=cy + r)
            .flat_map(|y| (cx - r..=cx + r).map(move |x| (x, y)))
            .collect();
        BlobMask::from_pixels(&px)
    }

    fn pred(x: f64, y: f64, depth: f64) -> HandPrediction {
        HandPrediction {
            center: (x, y),
            depth,
            size: (10.0, 10.0),
            window: Rect::centered(x, y, 30.0, 30.0),
        }
    }

    #[test]
    fn single_blob_goes_to_nearest_prediction() {
        let cfg = SegmentationConfig::default();
        let cands = [Candidate {
            mask: square(50, 50, 4),
            depth: 1200.0,
        }];
        let preds = [pred(50.0, 50.0, 1200.0), pred(120.0, 50.0, 1200.0)];
        assert_eq!(rank_and_assign(&cands, &preds, false, &cfg), [Some(0), None]);
    }

    #[test]
    fn identical_blobs_assigned_one_to_one() {
        let cfg = SegmentationConfig::default();
        let cands = [
            Candidate {
                mask: square(120, 50, 4),
                depth: 1200.0,
            },
            Candidate {
                mask: square(50, 50, 4),
                depth: 1200.0,
            },
        ];
        let preds = [pred(50.0, 50.0, 1200.0), pred(120.0, 50.0, 1200.0)];
        assert_eq!(rank_and_assign(&cands, &preds, false, &cfg), [Some(1), Some(0)]);
    }

    #[test]
    fn far_distractor_loses_on_depth() {
        let cfg = SegmentationConfig::default();
        let hand = Candidate {
            mask: square(54, 50, 4),
            depth: 1200.0,
        };
        let distractor = Candidate {
            mask: square(50, 50, 4),
            depth: 1800.0,
        };
        let preds = [pred(50.0, 50.0, 1200.0), pred(300.0, 50.0, 1200.0)];
        // Longhand: both 81 px against an expected 25 pi; the distractor has
        // zero depth score, the hand sits 4 px from the prediction with a
        // window half-diagonal of 15 sqrt 2.
        let e = 25.0 * std::f64::consts::PI;
        let size = (81.0 / e).min(e / 81.0);
        let s_d = score_blob(&distractor, &preds[0], &cfg);
        let s_h = score_blob(&hand, &preds[0], &cfg);
        assert!((s_d - (size + 1.0) / 3.0).abs() < 1e-12);
        assert!((s_h - (2.0 + size - 4.0 / (15.0 * 2f64.sqrt())) / 3.0).abs() < 1e-12);
        let out = rank_and_assign(&[distractor, hand], &preds, false, &cfg);
        assert_eq!(out[0], Some(1));
    }

    #[test]
    fn shared_blob_only_with_overlap() {
        let cfg = SegmentationConfig::default();
        let cands = [Candidate {
            mask: square(60, 50, 6),
            depth: 1200.0,
        }];
        let preds = [pred(56.0, 50.0, 1200.0), pred(64.0, 50.0, 1200.0)];
        let a = rank_and_assign(&cands, &preds, false, &cfg);
        assert_eq!(a.iter().filter(|x| x.is_some()).count(), 1);
        assert_eq!(rank_and_assign(&cands, &preds, true, &cfg), [Some(0), Some(0)]);
    }

    proptest! {
        #[test]
        fn permutation_invariant(
            blobs in proptest::collection::vec((0i64..80, 0i64..60, 2i64..6, 900.0f64..2000.0), 0..5),
            seed in any::<u64>(),
        ) {
            let cfg = SegmentationConfig::default();
            let cands: Vec<Candidate> = blobs
                .iter()
                .map(|&(x, y, r, d)| Candidate { mask: square(x, y, r), depth: d })
                .collect();
            let preds = [pred(30.0, 30.0, 1300.0), pred(60.0, 30.0, 1300.0)];
            let base = rank_and_assign(&cands, &preds, false, &cfg);
            let mut perm: Vec<usize> = (0..cands.len()).collect();
            let mut s = seed;
            for i in (1..perm.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let shuffled: Vec<Candidate> = perm.iter().map(|&i| cands[i].clone()).collect();
            let out = rank_and_assign(&shuffled, &preds, false, &cfg);
            for h in 0..2 {
                let a = base[h].map(|i| cands[i].clone());
                let b = out[h].map(|i| shuffled[i].clone());
                prop_assert_eq!(a, b);
            }
        }
    }
}
