use crate::image::{Mask, RgbImage};

/// Normalized rg chromaticity; black maps to the neutral point.
pub fn rg_normalize(px: [u8; 3]) -> (f64, f64) {
    let sum = px[0] as u32 + px[1] as u32 + px[2] as u32;
    if sum == 0 {
        return (1.0 / 3.0, 1.0 / 3.0);
    }
    (px[0] as f64 / sum as f64, px[1] as f64 / sum as f64)
}

/// Skin and non-skin histograms over quantized (r, g).
#[derive(Clone, Debug, PartialEq)]
pub struct SkinHistogram {
    bins: usize,
    skin: Vec<f64>,
    nonskin: Vec<f64>,
}

impl SkinHistogram {
    pub fn new(bins: usize) -> Self {
        assert!(bins > 0, "histogram needs at least one bin");
        Self {
            bins,
            skin: vec![0.0; bins * bins],
            nonskin: vec![0.0; bins * bins],
        }
    }

    pub fn from_pixels(bins: usize, pixels: impl IntoIterator<Item = ([u8; 3], bool)>) -> Self {
        let mut h = Self::new(bins);
        for (px, is_skin) in pixels {
            h.add(px, is_skin);
        }
        h
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn skin_counts(&self) -> &[f64] {
        &self.skin
    }

    pub fn nonskin_counts(&self) -> &[f64] {
        &self.nonskin
    }

    pub fn skin_total(&self) -> f64 {
        self.skin.iter().sum()
    }

    pub fn nonskin_total(&self) -> f64 {
        self.nonskin.iter().sum()
    }

    #[inline]
    pub fn bin_of(&self, px: [u8; 3]) -> usize {
        let (r, g) = rg_normalize(px);
        let q = |v: f64| ((v * self.bins as f64) as usize).min(self.bins - 1);
        q(r) * self.bins + q(g)
    }

    pub fn add(&mut self, px: [u8; 3], is_skin: bool) {
        let b = self.bin_of(px);
        if is_skin {
            self.skin[b] += 1.0;
        } else {
            self.nonskin[b] += 1.0;
        }
    }

    /// Laplace-smoothed ratio of per-bin likelihoods for every bin.
    pub fn ratio_table(&self) -> Vec<f64> {
        let n = (self.bins * self.bins) as f64;
        let (st, nt) = (self.skin_total() + n, self.nonskin_total() + n);
        self.skin
            .iter()
            .zip(&self.nonskin)
            .map(|(s, ns)| ((s + 1.0) / st) / ((ns + 1.0) / nt))
            .collect()
    }

    pub fn likelihood_ratio(&self, px: [u8; 3]) -> f64 {
        self.ratio_table()[self.bin_of(px)]
    }

    /// Blend towards `new`: `(1 - alpha) * self + alpha * new`, per bin.
    pub fn blended(&self, new: &SkinHistogram, alpha: f64) -> SkinHistogram {
        assert_eq!(self.bins, new.bins, "histograms differ in bin count");
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| (1.0 - alpha) * x + alpha * y).collect()
        };
        SkinHistogram {
            bins: self.bins,
            skin: mix(&self.skin, &new.skin),
            nonskin: mix(&self.nonskin, &new.nonskin),
        }
    }
}

/// Pixels whose likelihood ratio exceeds `threshold`, optionally only inside
/// `region`.
pub fn skin_mask(frame: &RgbImage, model: &SkinHistogram, threshold: f64, region: Option<&Mask>) -> Mask {
    let table = model.ratio_table();
    Mask::from_fn(frame.width(), frame.height(), |x, y| {
        region.is_none_or(|r| r.get(x, y)) && table[model.bin_of(frame.get(x, y))] > threshold
    })
}

/// Adaptive update with the histogram of newly labelled pixels.
pub fn update_adaptive_model(
    model: &SkinHistogram,
    pixels: impl IntoIterator<Item = ([u8; 3], bool)>,
    alpha: f64,
) -> SkinHistogram {
    let new = SkinHistogram::from_pixels(model.bins, pixels);
    model.blended(&new, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rg_examples() {
        assert_eq!(rg_normalize([100, 100, 100]), (1.0 / 3.0, 1.0 / 3.0));
        assert_eq!(rg_normalize([255, 0, 0]), (1.0, 0.0));
        assert_eq!(rg_normalize([0, 0, 0]), (1.0 / 3.0, 1.0 / 3.0));
    }

    fn frame() -> RgbImage {
        let mut img = RgbImage::new(16, 16);
        for y in 0..16 {
            for x in 0..16 {
                img.put(x, y, [(x * 16) as u8, (y * 16) as u8, 60]);
            }
        }
        img
    }

    #[test]
    fn point_mass_model_selects_its_bin() {
        let target = [200, 120, 60];
        let model = SkinHistogram::from_pixels(32, std::iter::repeat_n((target, true), 50));
        let img = frame();
        let mask = skin_mask(&img, &model, 1.0, None);
        let bin = model.bin_of(target);
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(mask.get(x, y), model.bin_of(img.get(x, y)) == bin);
            }
        }
    }

    #[test]
    fn infinite_threshold_gives_empty_mask() {
        let model = SkinHistogram::from_pixels(32, [([200, 120, 60], true)]);
        assert!(skin_mask(&frame(), &model, f64::INFINITY, None).is_empty());
    }

    #[test]
    fn update_limits() {
        let old = SkinHistogram::from_pixels(8, [([200, 120, 60], true), ([10, 10, 200], false)]);
        let pixels = [([90, 90, 90], true), ([20, 200, 20], false)];
        assert_eq!(update_adaptive_model(&old, pixels, 0.0), old);
        assert_eq!(update_adaptive_model(&old, pixels, 1.0), SkinHistogram::from_pixels(8, pixels));
    }

    #[test]
    fn repeated_half_updates_approach_target_monotonically() {
        let old = SkinHistogram::from_pixels(8, [([200, 120, 60], true), ([10, 10, 200], false)]);
        let pixels = [([90, 90, 90], true), ([90, 90, 90], true), ([20, 200, 20], false)];
        let target = SkinHistogram::from_pixels(8, pixels);
        let once = update_adaptive_model(&old, pixels, 0.5);
        let twice = update_adaptive_model(&once, pixels, 0.5);
        for b in 0..64 {
            let t = target.skin_counts()[b];
            let d0 = (old.skin_counts()[b] - t).abs();
            let d1 = (once.skin_counts()[b] - t).abs();
            let d2 = (twice.skin_counts()[b] - t).abs();
            assert!(d1 <= d0 && d2 <= d1);
            // Recurrence in closed form: t + (x0 - t) / 4.
            assert!((twice.skin_counts()[b] - (t + (old.skin_counts()[b] - t) * 0.25)).abs() < 1e-12);
        }
    }
}
