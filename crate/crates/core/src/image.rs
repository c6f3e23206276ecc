//! Raster containers and binary PPM/PGM encoding.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit interleaved RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Option<Self> {
        (data.len() == width * height * 3).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, px: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&px);
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.put(self.width - 1 - x, y, self.get(x, y));
            }
        }
        out
    }

    /// Integer Rec.601 luma.
    pub fn to_gray(&self) -> GrayImage {
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| ((299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32 + 500) / 1000) as u8)
            .collect();
        GrayImage {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// 8-bit grayscale image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Option<Self> {
        (data.len() == width * height).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }
}

/// Depth image in millimetres; 0 marks a missing reading.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    data: Vec<u16>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u16>) -> Option<Self> {
        (data.len() == width * height).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_raw(&self) -> &[u16] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, v: u16) {
        self.data[y * self.width + x] = v;
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.put(self.width - 1 - x, y, self.get(x, y));
            }
        }
        out
    }
}

/// Full-frame binary mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Out-of-bounds reads are background.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.data[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn and(&self, other: &Mask) -> Mask {
        debug_assert_eq!((self.width, self.height), (other.width, other.height));
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a && b).collect(),
        }
    }

    pub fn and_not(&self, other: &Mask) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a && !b).collect(),
        }
    }

    pub fn or(&self, other: &Mask) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a || b).collect(),
        }
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }
}

/// Axis-aligned rectangle in pixel units, `(x, y)` is the top-left corner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn centered(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self {
            x: cx - w / 2.0,
            y: cy - h / 2.0,
            w,
            h,
        }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.x < other.right() && other.x < self.right() && self.y < other.bottom() && other.y < self.bottom()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x && x <= self.right() && y >= self.y && y <= self.bottom()
    }

    /// Clip to `[0, width] x [0, height]`.
    pub fn clamp_to(&self, width: usize, height: usize) -> Rect {
        let x0 = self.x.clamp(0.0, width as f64);
        let y0 = self.y.clamp(0.0, height as f64);
        let x1 = self.right().clamp(0.0, width as f64);
        let y1 = self.bottom().clamp(0.0, height as f64);
        Rect {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        }
    }

    /// Whether the pixel centre `(px, py)` falls inside.
    #[inline]
    pub fn covers_pixel(&self, px: i64, py: i64) -> bool {
        let (x, y) = (px as f64 + 0.5, py as f64 + 0.5);
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }
}

/// Binary blob stored in its tight bounding box with a signed origin, so it
/// can be translated partially outside the frame.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct BlobMask {
    x0: i64,
    y0: i64,
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BlobMask {
    pub fn from_pixels(pixels: &[(i64, i64)]) -> Self {
        if pixels.is_empty() {
            return Self::default();
        }
        let (mut x0, mut y0, mut x1, mut y1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
        for &(x, y) in pixels {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let width = (x1 - x0 + 1) as usize;
        let height = (y1 - y0 + 1) as usize;
        let mut bits = vec![false; width * height];
        for &(x, y) in pixels {
            bits[(y - y0) as usize * width + (x - x0) as usize] = true;
        }
        Self {
            x0,
            y0,
            width,
            height,
            bits,
        }
    }

    pub fn from_mask(mask: &Mask) -> Self {
        let mut pixels = Vec::new();
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                if mask.get(x, y) {
                    pixels.push((x as i64, y as i64));
                }
            }
        }
        Self::from_pixels(&pixels)
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn origin(&self) -> (i64, i64) {
        (self.x0, self.y0)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Membership in frame coordinates.
    #[inline]
    pub fn contains(&self, x: i64, y: i64) -> bool {
        let (lx, ly) = (x - self.x0, y - self.y0);
        lx >= 0
            && ly >= 0
            && (lx as usize) < self.width
            && (ly as usize) < self.height
            && self.bits[ly as usize * self.width + lx as usize]
    }

    /// Membership in box-local coordinates.
    #[inline]
    pub fn local(&self, lx: usize, ly: usize) -> bool {
        self.bits[ly * self.width + lx]
    }

    pub fn pixels(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        (0..self.height).flat_map(move |ly| {
            (0..self.width).filter_map(move |lx| {
                self.bits[ly * self.width + lx].then_some((self.x0 + lx as i64, self.y0 + ly as i64))
            })
        })
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Mean pixel coordinate; `None` for an empty blob.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (x, y) in self.pixels() {
            sx += x as f64;
            sy += y as f64;
            n += 1;
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    /// Bounding box as a rectangle over pixel extents.
    pub fn bbox(&self) -> Rect {
        Rect {
            x: self.x0 as f64,
            y: self.y0 as f64,
            w: self.width as f64,
            h: self.height as f64,
        }
    }

    pub fn translated(&self, dx: i64, dy: i64) -> Self {
        Self {
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            ..self.clone()
        }
    }

    pub fn intersection_area(&self, other: &BlobMask) -> usize {
        let xa = self.x0.max(other.x0);
        let ya = self.y0.max(other.y0);
        let xb = (self.x0 + self.width as i64).min(other.x0 + other.width as i64);
        let yb = (self.y0 + self.height as i64).min(other.y0 + other.height as i64);
        let mut n = 0;
        for y in ya..yb {
            for x in xa..xb {
                if self.contains(x, y) && other.contains(x, y) {
                    n += 1;
                }
            }
        }
        n
    }

    /// Intersection over union; two empty blobs have IoU 1.
    pub fn iou(&self, other: &BlobMask) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Rasterise into a full-frame mask, dropping out-of-frame pixels.
    pub fn paint(&self, mask: &mut Mask) {
        for (x, y) in self.pixels() {
            if x >= 0 && y >= 0 && (x as usize) < mask.width() && (y as usize) < mask.height() {
                mask.set(x as usize, y as usize, true);
            }
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, header: &str, payload: &[u8]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    file.write_all(header.as_bytes())
        .and_then(|_| file.write_all(payload))
        .and_then(|_| file.flush())
        .map_err(|e| Error::io(path, e))
}

/// Parses `magic width height maxval` and returns the offset of the raster.
fn parse_header(bytes: &[u8], magic: &[u8; 2], path: &Path) -> Result<(usize, usize, u32, usize)> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::format(
            path,
            format!("expected {} header", String::from_utf8_lossy(magic)),
        ));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::format(path, "truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(path, "malformed header field"))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::format(path, "missing whitespace after maxval")),
    }
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::format(path, "invalid dimensions or maxval"));
    }
    Ok((w as usize, h as usize, maxval, pos))
}

pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<()> {
    write_file(path, &format!("P6\n{} {}\n255\n", img.width, img.height), &img.data)
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    let bytes = read_file(path)?;
    let (w, h, maxval, off) = parse_header(&bytes, b"P6", path)?;
    if maxval != 255 {
        return Err(Error::format(path, "only 8-bit PPM is supported"));
    }
    let data = bytes
        .get(off..off + w * h * 3)
        .ok_or_else(|| Error::format(path, "truncated raster"))?
        .to_vec();
    Ok(RgbImage {
        width: w,
        height: h,
        data,
    })
}

/// 16-bit big-endian PGM.
pub fn write_pgm16(path: &Path, img: &DepthImage) -> Result<()> {
    let payload: Vec<u8> = img.data.iter().flat_map(|v| v.to_be_bytes()).collect();
    write_file(path, &format!("P5\n{} {}\n65535\n", img.width, img.height), &payload)
}

pub fn read_pgm16(path: &Path) -> Result<DepthImage> {
    let bytes = read_file(path)?;
    let (w, h, maxval, off) = parse_header(&bytes, b"P5", path)?;
    if maxval < 256 {
        return Err(Error::format(path, "expected a 16-bit PGM"));
    }
    let raw = bytes
        .get(off..off + w * h * 2)
        .ok_or_else(|| Error::format(path, "truncated raster"))?;
    let data = raw.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok(DepthImage {
        width: w,
        height: h,
        data,
    })
}

pub fn write_pgm8(path: &Path, img: &GrayImage) -> Result<()> {
    write_file(path, &format!("P5\n{} {}\n255\n", img.width, img.height), &img.data)
}

pub fn read_pgm8(path: &Path) -> Result<GrayImage> {
    let bytes = read_file(path)?;
    let (w, h, maxval, off) = parse_header(&bytes, b"P5", path)?;
    if maxval > 255 {
        return Err(Error::format(path, "expected an 8-bit PGM"));
    }
    let data = bytes
        .get(off..off + w * h)
        .ok_or_else(|| Error::format(path, "truncated raster"))?
        .to_vec();
    Ok(GrayImage {
        width: w,
        height: h,
        data,
    })
}
