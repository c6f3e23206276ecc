//! Two Kalman filters per hand: constant acceleration for the centroid and
//! constant velocity for the bounding-box size.

use nalgebra::{SMatrix, SVector};

use crate::config::TrackingConfig;
use crate::image::{BlobMask, Rect};

type Vec6 = SVector<f64, 6>;
type Mat6 = SMatrix<f64, 6, 6>;
type Vec4 = SVector<f64, 4>;
type Mat4 = SMatrix<f64, 4, 4>;

#[derive(Clone, Debug, PartialEq)]
pub struct HandTrack {
    /// `(x, y, vx, vy, ax, ay)` in px, px/frame and px/frame².
    pub motion_state: Vec6,
    pub motion_cov: Mat6,
    /// `(w, h, vw, vh)`.
    pub box_state: Vec4,
    pub box_cov: Mat4,
    pub coast_count: u32,
    pub process_noise: f64,
    pub measurement_noise: f64,
}

/// Centroid and bounding-box size of an observed hand.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    pub centroid: (f64, f64),
    pub size: (f64, f64),
}

fn motion_transition() -> Mat6 {
    let mut f = Mat6::identity();
    for i in 0..2 {
        f[(i, i + 2)] = 1.0;
        f[(i, i + 4)] = 0.5;
        f[(i + 2, i + 4)] = 1.0;
    }
    f
}

fn box_transition() -> Mat4 {
    let mut f = Mat4::identity();
    f[(0, 2)] = 1.0;
    f[(1, 3)] = 1.0;
    f
}

fn symmetrize<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

/// Joseph-form correction of the first two state components.
fn correct<const N: usize>(
    x: &SVector<f64, N>,
    p: &SMatrix<f64, N, N>,
    z: (f64, f64),
    r: f64,
) -> Option<(SVector<f64, N>, SMatrix<f64, N, N>)> {
    let mut h = SMatrix::<f64, 2, N>::zeros();
    h[(0, 0)] = 1.0;
    h[(1, 1)] = 1.0;
    let rm = SMatrix::<f64, 2, 2>::identity() * r;
    let s = h * p * h.transpose() + rm;
    let k = p * h.transpose() * s.try_inverse()?;
    let innovation = SVector::<f64, 2>::new(z.0, z.1) - h * x;
    let x = x + k * innovation;
    let i_kh = SMatrix::<f64, N, N>::identity() - k * h;
    let p = i_kh * p * i_kh.transpose() + k * rm * k.transpose();
    Some((x, symmetrize(&p)))
}

impl HandTrack {
    /// Starts a track at `position` with zero velocity and acceleration.
    pub fn new(position: (f64, f64), size: (f64, f64), cfg: &TrackingConfig) -> Self {
        let mut motion_state = Vec6::zeros();
        motion_state[0] = position.0;
        motion_state[1] = position.1;
        Self {
            motion_state,
            motion_cov: Mat6::identity() * cfg.initial_covariance,
            box_state: Vec4::new(size.0, size.1, 0.0, 0.0),
            box_cov: Mat4::identity() * cfg.initial_covariance,
            coast_count: 0,
            process_noise: cfg.process_noise,
            measurement_noise: cfg.measurement_noise,
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.motion_state[0], self.motion_state[1])
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.motion_state[2], self.motion_state[3])
    }

    pub fn size(&self) -> (f64, f64) {
        (self.box_state[0], self.box_state[1])
    }

    pub fn predict(&self) -> HandTrack {
        let f = motion_transition();
        let g = box_transition();
        let q = self.process_noise;
        let mut box_state = g * self.box_state;
        box_state[0] = box_state[0].max(1.0);
        box_state[1] = box_state[1].max(1.0);
        HandTrack {
            motion_state: f * self.motion_state,
            motion_cov: symmetrize(&(f * self.motion_cov * f.transpose() + Mat6::identity() * q)),
            box_state,
            box_cov: symmetrize(&(g * self.box_cov * g.transpose() + Mat4::identity() * q)),
            ..self.clone()
        }
    }

    /// Corrects both filters; a non-finite measurement leaves the track
    /// coasting instead.
    pub fn update(&self, m: &Measurement) -> HandTrack {
        let finite = [m.centroid.0, m.centroid.1, m.size.0, m.size.1]
            .iter()
            .all(|v| v.is_finite());
        let corrected = finite
            .then(|| {
                let (xs, ps) = correct(&self.motion_state, &self.motion_cov, m.centroid, self.measurement_noise)?;
                let (xb, pb) = correct(&self.box_state, &self.box_cov, m.size, self.measurement_noise)?;
                Some((xs, ps, xb, pb))
            })
            .flatten();
        match corrected {
            Some((motion_state, motion_cov, mut box_state, box_cov)) => {
                box_state[0] = box_state[0].max(1.0);
                box_state[1] = box_state[1].max(1.0);
                HandTrack {
                    motion_state,
                    motion_cov,
                    box_state,
                    box_cov,
                    coast_count: 0,
                    ..self.clone()
                }
            }
            None => self.coasted(),
        }
    }

    /// Marks a frame without a measurement.
    pub fn coasted(&self) -> HandTrack {
        HandTrack {
            coast_count: self.coast_count + 1,
            ..self.clone()
        }
    }
}

/// Predicted box around the predicted centre, padded on every side by
/// `max(pad_fraction * side, min_pad * shoulder)` and clipped to the frame.
/// `shoulder` is the shoulder span in pixels.
pub fn search_window(track: &HandTrack, cfg: &TrackingConfig, shoulder: f64, width: usize, height: usize) -> Rect {
    let (x, y) = track.position();
    let (w, h) = track.size();
    let min_pad = cfg.min_pad * shoulder;
    let pw = (cfg.pad_fraction * w).max(min_pad);
    let ph = (cfg.pad_fraction * h).max(min_pad);
    Rect::centered(x, y, w + 2.0 * pw, h + 2.0 * ph).clamp_to(width, height)
}

fn blob_in_window(blob: &BlobMask, window: &Rect) -> bool {
    blob.bbox().intersects(window) && blob.pixels().any(|(x, y)| window.covers_pixel(x, y))
}

/// True when the two windows intersect and exactly one blob of at least
/// `min_area` pixels lies in their union.
pub fn detect_overlap(windows: [&Rect; 2], blobs: &[BlobMask], min_area: usize) -> bool {
    if !windows[0].intersects(windows[1]) {
        return false;
    }
    blobs
        .iter()
        .filter(|b| b.area() >= min_area && (blob_in_window(b, windows[0]) || blob_in_window(b, windows[1])))
        .count()
        == 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> TrackingConfig {
        TrackingConfig::default()
    }

    #[test]
    fn constant_velocity_prediction() {
        let mut t = HandTrack::new((0.0, 0.0), (10.0, 10.0), &cfg());
        t.motion_state[2] = 1.0;
        assert_eq!(t.predict().position(), (1.0, 0.0));
    }

    #[test]
    fn constant_acceleration_prediction() {
        let mut t = HandTrack::new((0.0, 0.0), (10.0, 10.0), &cfg());
        t.motion_state[4] = 2.0;
        let p = t.predict();
        assert_eq!(p.position(), (1.0, 0.0));
        assert_eq!(p.velocity(), (2.0, 0.0));
    }

    #[test]
    fn noiseless_linear_track_converges() {
        let c = TrackingConfig {
            measurement_noise: 1e-6,
            ..cfg()
        };
        let truth = |k: f64| (5.0 + 2.0 * k, 7.0 - 0.5 * k);
        let mut t = HandTrack::new(truth(0.0), (10.0, 10.0), &c);
        let mut sq = Vec::new();
        for k in 1..=50 {
            t = t.predict().update(&Measurement {
                centroid: truth(k as f64),
                size: (10.0, 10.0),
            });
            if k > 10 {
                let (x, y) = t.position();
                let (tx, ty) = truth(k as f64);
                sq.push((x - tx).powi(2) + (y - ty).powi(2));
            }
        }
        let rmse = (sq.iter().sum::<f64>() / sq.len() as f64).sqrt();
        assert!(rmse <= 0.1, "rmse {rmse}");
    }

    #[test]
    fn measurement_noise_limits() {
        let t = HandTrack::new((0.0, 0.0), (10.0, 10.0), &cfg()).predict();
        let m = Measurement {
            centroid: (3.0, -4.0),
            size: (12.0, 8.0),
        };
        let exact = HandTrack {
            measurement_noise: 0.0,
            ..t.clone()
        }
        .update(&m);
        assert!((exact.position().0 - 3.0).abs() < 1e-9 && (exact.position().1 + 4.0).abs() < 1e-9);
        let ignored = HandTrack {
            measurement_noise: 1e300,
            ..t.clone()
        }
        .update(&m);
        assert!(ignored.position().0.abs() < 1e-9 && ignored.position().1.abs() < 1e-9);
    }

    #[test]
    fn gain_matches_scalar_algebra() {
        // With a diagonal prior the x coordinate decouples from y but not
        // from its own derivatives; start from zero derivative covariance so
        // the gain reduces to P / (P + R).
        let mut t = HandTrack::new((0.0, 0.0), (10.0, 10.0), &cfg());
        t.motion_cov = Mat6::zeros();
        t.motion_cov[(0, 0)] = 9.0;
        t.motion_cov[(1, 1)] = 9.0;
        t.measurement_noise = 4.0;
        let u = t.update(&Measurement {
            centroid: (13.0, 0.0),
            size: (10.0, 10.0),
        });
        let k = 9.0 / (9.0 + 4.0);
        assert!((u.position().0 - k * 13.0).abs() < 1e-12);
        assert!((u.motion_cov[(0, 0)] - (1.0 - k) * 9.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_measurement_coasts() {
        let t = HandTrack::new((1.0, 1.0), (10.0, 10.0), &cfg());
        let u = t.update(&Measurement {
            centroid: (f64::NAN, 0.0),
            size: (1.0, 1.0),
        });
        assert_eq!(u.coast_count, 1);
        assert_eq!(u.position(), (1.0, 1.0));
    }

    #[test]
    fn window_examples() {
        let t = HandTrack::new((160.0, 120.0), (40.0, 40.0), &cfg());
        let w = search_window(&t, &cfg(), 55.0, 320, 240);
        assert_eq!((w.w, w.h), (60.0, 60.0));
        assert_eq!(w.center(), (160.0, 120.0));
        let corner = HandTrack::new((2.0, 3.0), (40.0, 40.0), &cfg());
        let w = search_window(&corner, &cfg(), 55.0, 320, 240);
        assert!(w.x >= 0.0 && w.y >= 0.0 && w.right() <= 320.0 && w.bottom() <= 240.0);
    }

    #[test]
    fn overlap_examples() {
        let blob = |x0: i64| {
            let px: Vec<_> = (0..8).flat_map(|y| (x0..x0 + 8).map(move |x| (x, y + 20))).collect();
            BlobMask::from_pixels(&px)
        };
        let a = Rect { x: 0.0, y: 10.0, w: 30.0, h: 30.0 };
        let b = Rect { x: 20.0, y: 10.0, w: 30.0, h: 30.0 };
        let far = Rect { x: 100.0, y: 10.0, w: 30.0, h: 30.0 };
        assert!(!detect_overlap([&a, &far], &[blob(10)], 30));
        assert!(!detect_overlap([&a, &b], &[blob(5), blob(35)], 30));
        assert!(detect_overlap([&a, &b], &[blob(20)], 30));
    }

    #[test]
    fn covariance_stays_symmetric_over_many_cycles() {
        let mut t = HandTrack::new((10.0, 10.0), (10.0, 10.0), &cfg());
        let mut s: u64 = 1;
        for k in 0..10_000 {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
            let noise = (s >> 40) as f64 / (1u64 << 24) as f64 - 0.5;
            t = t.predict();
            if k % 7 != 0 {
                t = t.update(&Measurement {
                    centroid: (10.0 + noise, 10.0 - noise),
                    size: (10.0, 11.0),
                });
            }
            let asym = (t.motion_cov - t.motion_cov.transpose()).abs().max();
            assert!(asym <= 1e-9);
            assert!((t.box_cov - t.box_cov.transpose()).abs().max() <= 1e-9);
        }
    }

    #[test]
    fn repeated_measurement_innovation_decays() {
        // The constant-acceleration filter rings slightly around a fixed
        // target, so the envelope (maximum per block of frames) is what
        // decreases monotonically.
        let mut t = HandTrack::new((0.0, 0.0), (10.0, 10.0), &cfg());
        let m = Measurement {
            centroid: (20.0, -5.0),
            size: (10.0, 10.0),
        };
        let mut innovations = Vec::new();
        for _ in 0..80 {
            t = t.predict();
            let (x, y) = t.position();
            innovations.push((m.centroid.0 - x).hypot(m.centroid.1 - y));
            t = t.update(&m);
        }
        let envelope: Vec<f64> = innovations
            .chunks(10)
            .map(|c| c.iter().cloned().fold(0.0, f64::max))
            .collect();
        for pair in envelope.windows(2) {
            assert!(pair[1] < pair[0], "{envelope:?}");
        }
        assert!(*envelope.last().unwrap() < 1e-3);
    }

    proptest! {
        #[test]
        fn coasting_never_shrinks_covariance(steps in 1usize..40, vx in -5.0f64..5.0) {
            let mut t = HandTrack::new((0.0, 0.0), (10.0, 10.0), &cfg());
            t = t.predict().update(&Measurement { centroid: (vx, 0.0), size: (10.0, 10.0) });
            for _ in 0..steps {
                let p = t.predict();
                prop_assert!(p.motion_cov.determinant() >= t.motion_cov.determinant());
                prop_assert!(p.box_cov.determinant() >= t.box_cov.determinant());
                for i in 0..2 {
                    prop_assert!(p.motion_cov[(i, i)] >= t.motion_cov[(i, i)]);
                    prop_assert!(p.box_cov[(i, i)] >= t.box_cov[(i, i)]);
                }
                t = p.coasted();
            }
        }
    }
}
