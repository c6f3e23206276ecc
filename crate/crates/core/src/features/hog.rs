use crate::image::{BlobMask, GrayImage};

pub const HOG_DIM: usize = 36;
pub const HOG_SIZE: usize = 32;
const CELLS: usize = 2;
const BINS: usize = 9;

/// Grey levels of `gray` under the blob's bounding box, zero outside the
/// blob, as a row-major `f64` patch with its width and height.
pub fn masked_crop(gray: &GrayImage, blob: &BlobMask) -> (Vec<f64>, usize, usize) {
    let (x0, y0) = blob.origin();
    let (w, h) = (blob.width(), blob.height());
    let mut out = vec![0.0; w * h];
    for ly in 0..h {
        for lx in 0..w {
            let (x, y) = (x0 + lx as i64, y0 + ly as i64);
            if blob.local(lx, ly) && x >= 0 && y >= 0 && (x as usize) < gray.width() && (y as usize) < gray.height() {
                out[ly * w + lx] = gray.get(x as usize, y as usize) as f64;
            }
        }
    }
    (out, w, h)
}

/// Bilinear resize with pixel-centre alignment and edge clamping.
pub fn resize(src: &[f64], w: usize, h: usize, ow: usize, oh: usize) -> Vec<f64> {
    let mut out = vec![0.0; ow * oh];
    for oy in 0..oh {
        let sy = ((oy as f64 + 0.5) * h as f64 / oh as f64 - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for ox in 0..ow {
            let sx = ((ox as f64 + 0.5) * w as f64 / ow as f64 - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out[oy * ow + ox] = top * (1.0 - fy) + bottom * fy;
        }
    }
    out
}

/// HOG of a square `HOG_SIZE` patch: central-difference gradients (edge
/// pixels replicated), unsigned orientation in 9 bins of 20 degrees,
/// magnitude-weighted per 16x16 cell, the 36 values L2-normalised together.
pub fn hog_patch(patch: &[f64]) -> [f64; HOG_DIM] {
    let n = HOG_SIZE;
    let at = |x: isize, y: isize| patch[y.clamp(0, n as isize - 1) as usize * n + x.clamp(0, n as isize - 1) as usize];
    let cell = n / CELLS;
    let mut out = [0.0; HOG_DIM];
    for y in 0..n {
        for x in 0..n {
            let (xi, yi) = (x as isize, y as isize);
            let gx = at(xi + 1, yi) - at(xi - 1, yi);
            let gy = at(xi, yi + 1) - at(xi, yi - 1);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).to_degrees().rem_euclid(180.0);
            let bin = ((angle / 20.0) as usize).min(BINS - 1);
            let c = (y / cell) * CELLS + x / cell;
            out[c * BINS + bin] += mag;
        }
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut out {
            *v /= norm;
        }
    }
    out
}

/// HOG of the masked grey crop under `blob`; `None` for an empty blob.
pub fn hog(gray: &GrayImage, blob: &BlobMask) -> Option<[f64; HOG_DIM]> {
    if blob.is_empty() {
        return None;
    }
    let (crop, w, h) = masked_crop(gray, blob);
    Some(hog_patch(&resize(&crop, w, h, HOG_SIZE, HOG_SIZE)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_patch_is_zero() {
        assert_eq!(hog_patch(&vec![77.0; HOG_SIZE * HOG_SIZE]), [0.0; HOG_DIM]);
        let mut g = GrayImage::new(20, 20);
        for y in 0..20 {
            for x in 0..20 {
                g.put(x, y, 90);
            }
        }
        let px: Vec<_> = (0..20).flat_map(|y| (0..20).map(move |x| (x, y))).collect();
        assert_eq!(hog(&g, &BlobMask::from_pixels(&px)).unwrap(), [0.0; HOG_DIM]);
    }

    #[test]
    fn vertical_step_edge_fills_horizontal_bin() {
        let patch: Vec<f64> = (0..HOG_SIZE * HOG_SIZE)
            .map(|i| if i % HOG_SIZE < 10 { 0.0 } else { 200.0 })
            .collect();
        let h = hog_patch(&patch);
        // The edge crosses the left column of cells only.
        for c in 0..4 {
            for b in 0..BINS {
                let v = h[c * BINS + b];
                if (c == 0 || c == 2) && b == 0 {
                    assert!((v - 0.5f64.sqrt()).abs() < 1e-12);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    /// Straight-line restatement: explicit index arithmetic, no closures.
    fn reference_hog(p: &[f64]) -> Vec<f64> {
        let n = 32usize;
        let mut hist = vec![0.0; 36];
        for y in 0..n {
            for x in 0..n {
                let xl = if x == 0 { 0 } else { x - 1 };
                let xr = if x == n - 1 { n - 1 } else { x + 1 };
                let yu = if y == 0 { 0 } else { y - 1 };
                let yd = if y == n - 1 { n - 1 } else { y + 1 };
                let gx = p[y * n + xr] - p[y * n + xl];
                let gy = p[yd * n + x] - p[yu * n + x];
                let m = (gx * gx + gy * gy).sqrt();
                if m == 0.0 {
                    continue;
                }
                let mut a = gy.atan2(gx) * 180.0 / std::f64::consts::PI;
                while a < 0.0 {
                    a += 180.0;
                }
                while a >= 180.0 {
                    a -= 180.0;
                }
                let mut bin = (a / 20.0).floor() as usize;
                if bin > 8 {
                    bin = 8;
                }
                let cell = if y < 16 { 0 } else { 2 } + if x < 16 { 0 } else { 1 };
                hist[cell * 9 + bin] += m;
            }
        }
        let mut s = 0.0;
        for v in &hist {
            s += v * v;
        }
        let s = s.sqrt();
        if s > 0.0 {
            for v in hist.iter_mut() {
                *v /= s;
            }
        }
        hist
    }

    #[test]
    fn matches_reference_on_test_pattern() {
        let patch: Vec<f64> = (0..32 * 32)
            .map(|i| {
                let (x, y) = ((i % 32) as f64, (i / 32) as f64);
                (100.0 + 60.0 * (0.4 * x).sin() * (0.25 * y).cos() + 3.0 * x - 2.0 * y + ((x * y) % 7.0)).round()
            })
            .collect();
        let ours = hog_patch(&patch);
        let oracle = reference_hog(&patch);
        for i in 0..HOG_DIM {
            assert!((ours[i] - oracle[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn resize_identity_and_constant() {
        let src: Vec<f64> = (0..12).map(|v| v as f64).collect();
        assert_eq!(resize(&src, 4, 3, 4, 3), src);
        let flat = resize(&[5.0; 6], 3, 2, 32, 32);
        assert!(flat.iter().all(|&v| v == 5.0));
    }

    #[test]
    fn crop_zeroes_pixels_outside_blob() {
        let mut g = GrayImage::new(4, 4);
        for y in 0..4 {
            for x in 0..4 {
                g.put(x, y, 50);
            }
        }
        let blob = BlobMask::from_pixels(&[(1, 1), (2, 2)]);
        let (crop, w, h) = masked_crop(&g, &blob);
        assert_eq!((w, h), (2, 2));
        assert_eq!(crop, vec![50.0, 0.0, 0.0, 50.0]);
    }
}
