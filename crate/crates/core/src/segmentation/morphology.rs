use crate::image::{BlobMask, GrayImage, Mask};

/// Pixels whose absolute gray difference exceeds `threshold`.
pub fn motion_mask(gray: &GrayImage, previous: &GrayImage, threshold: u8) -> Mask {
    assert_eq!(
        (gray.width(), gray.height()),
        (previous.width(), previous.height()),
        "motion mask needs equal frame sizes"
    );
    Mask::from_fn(gray.width(), gray.height(), |x, y| {
        gray.get(x, y).abs_diff(previous.get(x, y)) > threshold
    })
}

/// 3x3 erosion; pixels outside the frame count as background.
pub fn erode(mask: &Mask) -> Mask {
    Mask::from_fn(mask.width(), mask.height(), |x, y| {
        let (x, y) = (x as i64, y as i64);
        (-1..=1).all(|dy| (-1..=1).all(|dx| mask.get_signed(x + dx, y + dy)))
    })
}

pub fn dilate(mask: &Mask) -> Mask {
    Mask::from_fn(mask.width(), mask.height(), |x, y| {
        let (x, y) = (x as i64, y as i64);
        (-1..=1).any(|dy| (-1..=1).any(|dx| mask.get_signed(x + dx, y + dy)))
    })
}

/// 8-connected components in raster order of their first pixel.
pub fn label(mask: &Mask) -> Vec<BlobMask> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut blobs = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if seen[start] || !mask.as_slice()[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            pixels.push((x, y));
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if mask.get_signed(nx, ny) {
                        let j = ny as usize * w + nx as usize;
                        if !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        blobs.push(BlobMask::from_pixels(&pixels));
    }
    blobs
}

/// Opening followed by labelling; components below `min_area` are dropped.
pub fn open_and_label(mask: &Mask, min_area: usize) -> Vec<BlobMask> {
    label(&dilate(&erode(mask)))
        .into_iter()
        .filter(|b| b.area() >= min_area)
        .collect()
}

/// Candidate blobs from a skin mask and a motion mask.
pub fn clean_mask(skin: &Mask, motion: &Mask, min_area: usize) -> Vec<BlobMask> {
    open_and_label(&skin.and(motion), min_area)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square(w: usize, h: usize, x0: usize, y0: usize, side: usize) -> Mask {
        Mask::from_fn(w, h, |x, y| x >= x0 && x < x0 + side && y >= y0 && y < y0 + side)
    }

    #[test]
    fn speck_removed() {
        let mut m = Mask::new(10, 10);
        m.set(5, 5, true);
        assert!(open_and_label(&m, 1).is_empty());
    }

    #[test]
    fn square_survives_with_bounded_area() {
        let m = square(40, 40, 10, 10, 20);
        let blobs = clean_mask(&m, &Mask::from_fn(40, 40, |_, _| true), 30);
        assert_eq!(blobs.len(), 1);
        let a = blobs[0].area();
        assert!((18 * 18..=20 * 20).contains(&a));
    }

    #[test]
    fn identical_frames_have_no_motion() {
        let g = GrayImage::from_raw(3, 1, vec![1, 2, 3]).unwrap();
        assert!(motion_mask(&g, &g, 0).is_empty());
        let h = GrayImage::from_raw(3, 1, vec![1, 9, 3]).unwrap();
        assert_eq!(motion_mask(&h, &g, 0).count(), 1);
    }

    /// Union-find labelling over an explicit pixel list.
    fn brute_force_components(mask: &Mask) -> Vec<Vec<(i64, i64)>> {
        let px: Vec<(i64, i64)> = (0..mask.height())
            .flat_map(|y| (0..mask.width()).map(move |x| (x, y)))
            .filter(|&(x, y)| mask.get(x, y))
            .map(|(x, y)| (x as i64, y as i64))
            .collect();
        let mut parent: Vec<usize> = (0..px.len()).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            p[i] = r;
            r
        }
        for i in 0..px.len() {
            for j in 0..i {
                if (px[i].0 - px[j].0).abs() <= 1 && (px[i].1 - px[j].1).abs() <= 1 {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<(i64, i64)>> = Default::default();
        for i in 0..px.len() {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(px[i]);
        }
        let mut out: Vec<_> = groups.into_values().collect();
        for g in &mut out {
            g.sort();
        }
        out.sort();
        out
    }

    proptest! {
        #[test]
        fn labelling_matches_union_find(bits in proptest::collection::vec(any::<bool>(), 144)) {
            let m = Mask::from_fn(12, 12, |x, y| bits[y * 12 + x]);
            let mut ours: Vec<Vec<(i64, i64)>> = label(&m)
                .iter()
                .map(|b| { let mut p: Vec<_> = b.pixels().collect(); p.sort(); p })
                .collect();
            ours.sort();
            prop_assert_eq!(ours, brute_force_components(&m));
        }

        #[test]
        fn separated_blobs_stay_separate(gap in 2usize..6, a in 3usize..8, b in 3usize..8) {
            let w = a + gap + b + 4;
            let m = Mask::from_fn(w, 12, |x, y| {
                (y >= 2 && y < 2 + a && x >= 2 && x < 2 + a)
                    || (y >= 2 && y < 2 + b && x >= 2 + a + gap && x < 2 + a + gap + b)
            });
            prop_assert_eq!(label(&m).len(), brute_force_components(&m).len());
            prop_assert_eq!(label(&m).len(), 2);
        }

        #[test]
        fn cleaned_output_within_dilated_input(
            s in proptest::collection::vec(any::<bool>(), 256),
            m in proptest::collection::vec(any::<bool>(), 256),
        ) {
            let skin = Mask::from_fn(16, 16, |x, y| s[y * 16 + x]);
            let motion = Mask::from_fn(16, 16, |x, y| m[y * 16 + x] || s[y * 16 + x]);
            let bound = dilate(&skin.and(&motion));
            for blob in clean_mask(&skin, &motion, 1) {
                for (x, y) in blob.pixels() {
                    prop_assert!(bound.get(x as usize, y as usize));
                }
            }
        }
    }
}
