use crate::config::Eccentricity;
use crate::image::BlobMask;

pub const S_DIM: usize = 7;
pub const HU_DIM: usize = 7;
pub const SC_DIM: usize = 45;
pub const SC_POINTS: usize = 40;
pub const SC_RADIAL: usize = 5;
pub const SC_ANGULAR: usize = 9;
const SC_R_INNER: f64 = 0.125;
const SC_R_OUTER: f64 = 2.0;

/// Blobs smaller than this have no shape descriptors.
pub const MIN_SHAPE_AREA: usize = 3;

/// Central moments up to order three, treating every pixel as a unit square
/// centred on its integer coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub m00: f64,
    pub cx: f64,
    pub cy: f64,
    /// `mu[p][q]` for p + q <= 3.
    pub mu: [[f64; 4]; 4],
}

/// Integral of `(u - c)^p` over `[x - 1/2, x + 1/2]`.
fn cell_integral(x: f64, c: f64, p: i32) -> f64 {
    let (a, b) = (x - 0.5 - c, x + 0.5 - c);
    (b.powi(p + 1) - a.powi(p + 1)) / (p + 1) as f64
}

pub fn moments(blob: &BlobMask) -> Option<Moments> {
    let (cx, cy) = blob.centroid()?;
    let m00 = blob.area() as f64;
    let mut mu = [[0.0; 4]; 4];
    for (x, y) in blob.pixels() {
        let ix: [f64; 4] = std::array::from_fn(|p| cell_integral(x as f64, cx, p as i32));
        let iy: [f64; 4] = std::array::from_fn(|q| cell_integral(y as f64, cy, q as i32));
        for p in 0..4 {
            for q in 0..4 - p {
                mu[p][q] += ix[p] * iy[q];
            }
        }
    }
    Some(Moments { m00, cx, cy, mu })
}

/// Pixels of the blob with at least one 4-neighbour outside it.
pub fn perimeter(blob: &BlobMask) -> usize {
    blob.pixels()
        .filter(|&(x, y)| {
            !blob.contains(x - 1, y) || !blob.contains(x + 1, y) || !blob.contains(x, y - 1) || !blob.contains(x, y + 1)
        })
        .count()
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull of pixel centres, counter-clockwise in a y-up frame, without
/// collinear points.
pub fn convex_hull(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(i64, i64)>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Number of lattice points inside or on the convex hull of the blob's
/// pixel centres.
pub fn hull_pixel_count(blob: &BlobMask) -> usize {
    let pts: Vec<_> = blob.pixels().collect();
    let hull = convex_hull(&pts);
    if hull.len() < 3 {
        return pts.len();
    }
    let (x0, y0) = blob.origin();
    let mut count = 0;
    for y in y0..y0 + blob.height() as i64 {
        for x in x0..x0 + blob.width() as i64 {
            let inside = (0..hull.len()).all(|i| cross(hull[i], hull[(i + 1) % hull.len()], (x, y)) >= 0);
            if inside {
                count += 1;
            }
        }
    }
    count
}

/// Major and minor axis lengths and orientation (radians, x axis towards
/// the major axis) of the ellipse with the blob's normalised second moments.
pub fn ellipse(m: &Moments) -> (f64, f64, f64) {
    let uxx = m.mu[2][0] / m.m00;
    let uyy = m.mu[0][2] / m.m00;
    let uxy = m.mu[1][1] / m.m00;
    let common = ((uxx - uyy).powi(2) + 4.0 * uxy * uxy).sqrt();
    let major = 2.0 * std::f64::consts::SQRT_2 * (uxx + uyy + common).sqrt();
    let minor = 2.0 * std::f64::consts::SQRT_2 * (uxx + uyy - common).max(0.0).sqrt();
    let angle = 0.5 * (2.0 * uxy).atan2(uxx - uyy);
    (major, minor, angle)
}

/// Raw S-block `(a, p, s, c, M, m, cos β)` in pixel units; `None` for
/// degenerate blobs.
pub fn geometric_features(blob: &BlobMask, eccentricity: Eccentricity) -> Option<[f64; S_DIM]> {
    let area = blob.area();
    if area < MIN_SHAPE_AREA {
        return None;
    }
    let m = moments(blob)?;
    let (major, minor, angle) = ellipse(&m);
    let ratio = if major > 0.0 { minor / major } else { 1.0 };
    let c = match eccentricity {
        Eccentricity::AsPrinted => ((1.0 - ratio) * (1.0 - ratio)).sqrt(),
        Eccentricity::Standard => (1.0 - ratio * ratio).max(0.0).sqrt(),
    };
    let solidity = area as f64 / hull_pixel_count(blob) as f64;
    Some([area as f64, perimeter(blob) as f64, solidity, c, major, minor, angle.cos()])
}

/// The seven Hu invariants; `None` for degenerate blobs.
pub fn hu_moments(blob: &BlobMask) -> Option<[f64; HU_DIM]> {
    if blob.area() < MIN_SHAPE_AREA {
        return None;
    }
    let m = moments(blob)?;
    let eta = |p: usize, q: usize| m.mu[p][q] / m.m00.powf(1.0 + (p + q) as f64 / 2.0);
    let (n20, n02, n11) = (eta(2, 0), eta(0, 2), eta(1, 1));
    let (n30, n03, n21, n12) = (eta(3, 0), eta(0, 3), eta(2, 1), eta(1, 2));
    let a = n30 + n12;
    let b = n21 + n03;
    Some([
        n20 + n02,
        (n20 - n02).powi(2) + 4.0 * n11 * n11,
        (n30 - 3.0 * n12).powi(2) + (3.0 * n21 - n03).powi(2),
        a * a + b * b,
        (n30 - 3.0 * n12) * a * (a * a - 3.0 * b * b) + (3.0 * n21 - n03) * b * (3.0 * a * a - b * b),
        (n20 - n02) * (a * a - b * b) + 4.0 * n11 * a * b,
        (3.0 * n21 - n03) * a * (a * a - 3.0 * b * b) - (n30 - 3.0 * n12) * b * (3.0 * a * a - b * b),
    ])
}

const MOORE: [(i64, i64); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

/// Outer boundary of the component containing the blob's first pixel in
/// raster order, traced clockwise (image coordinates) by Moore-neighbour
/// following.
pub fn trace_boundary(blob: &BlobMask) -> Vec<(i64, i64)> {
    let Some(start) = blob.pixels().next() else {
        return Vec::new();
    };
    let mut contour = vec![start];
    // Arrived at `start` moving right, so the backtrack neighbour is west.
    let mut current = start;
    let mut dir = 4usize;
    let mut first_move: Option<((i64, i64), usize)> = None;
    loop {
        let mut next = None;
        for k in 1..=8 {
            let d = (dir + k) % 8;
            let cand = (current.0 + MOORE[d].0, current.1 + MOORE[d].1);
            if blob.contains(cand.0, cand.1) {
                next = Some((cand, d));
                break;
            }
        }
        let Some((cand, d)) = next else {
            return contour;
        };
        match first_move {
            None => first_move = Some((cand, d)),
            Some(fm) if current == start && (cand, d) == fm => {
                contour.pop();
                return contour;
            }
            _ => {}
        }
        contour.push(cand);
        current = cand;
        // The next sweep starts just past the pixel we came from.
        dir = (d + 4) % 8;
    }
}

/// `count` boundary points spaced uniformly along the traced contour
/// (repeating points when the contour is shorter).
pub fn sample_boundary(blob: &BlobMask, count: usize) -> Vec<(f64, f64)> {
    let contour = trace_boundary(blob);
    if contour.is_empty() {
        return Vec::new();
    }
    let n = contour.len();
    (0..count)
        .map(|k| {
            let p = contour[k * n / count];
            (p.0 as f64, p.1 as f64)
        })
        .collect()
}

fn radial_bin(r: f64) -> usize {
    if r <= 0.0 {
        return 0;
    }
    let lo = SC_R_INNER.ln();
    let step = (SC_R_OUTER.ln() - lo) / SC_RADIAL as f64;
    (((r.ln() - lo) / step).floor().max(0.0) as usize).min(SC_RADIAL - 1)
}

fn angular_bin(dx: f64, dy: f64) -> usize {
    let a = dy.atan2(dx).rem_euclid(std::f64::consts::TAU);
    ((a / std::f64::consts::TAU * SC_ANGULAR as f64) as usize).min(SC_ANGULAR - 1)
}

/// Log-polar shape context histograms of 40 boundary points, mean-pooled
/// and L1-normalised; index = radial bin * 9 + angular bin.
pub fn shape_context(blob: &BlobMask) -> Option<[f64; SC_DIM]> {
    if blob.area() < MIN_SHAPE_AREA {
        return None;
    }
    let pts = sample_boundary(blob, SC_POINTS);
    let n = pts.len();
    let mut dists = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                dists.push((pts[j].0 - pts[i].0).hypot(pts[j].1 - pts[i].1));
            }
        }
    }
    let mut sorted = dists.clone();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len();
    let median = if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    };
    if median <= 0.0 {
        return None;
    }
    let mut hist = [0.0; SC_DIM];
    let per_point = 1.0 / (n - 1) as f64;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (dx, dy) = (pts[j].0 - pts[i].0, pts[j].1 - pts[i].1);
            let r = dx.hypot(dy) / median;
            hist[radial_bin(r) * SC_ANGULAR + angular_bin(dx, dy)] += per_point;
        }
    }
    let total: f64 = hist.iter().sum();
    for v in &mut hist {
        *v /= total;
    }
    Some(hist)
}
