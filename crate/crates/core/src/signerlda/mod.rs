//! Signer-independent linear transform: DTW alignment within each class,
//! per-frame scatter matrices and the generalised eigenproblem.

mod dtw;

pub use dtw::{dtw_align, DtwPath};

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// One training sample: the frames to transform and the keys used to
/// align it (image positions).
#[derive(Clone, Copy, Debug)]
pub struct AlignInput<'a> {
    pub features: &'a [Vec<f64>],
    pub keys: &'a [Vec<f64>],
}

/// Samples of one class warped onto a common time axis.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedClassSet {
    pub label: String,
    /// `samples[n][t][d]`.
    pub samples: Vec<Vec<Vec<f64>>>,
    /// Index of the reference sample among the inputs.
    pub reference: usize,
}

impl AlignedClassSet {
    pub fn frames(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn dim(&self) -> usize {
        self.samples.first().and_then(|s| s.first()).map_or(0, Vec::len)
    }
}

/// Averages the query frames mapped onto each reference slot.
pub fn warp_to_reference(path: &DtwPath, query: &[Vec<f64>], ref_len: usize) -> Vec<Vec<f64>> {
    let dim = query[0].len();
    let mut sums = vec![vec![0.0; dim]; ref_len];
    let mut counts = vec![0usize; ref_len];
    for &(r, q) in &path.steps {
        for (s, v) in sums[r].iter_mut().zip(&query[q]) {
            *s += v;
        }
        counts[r] += 1;
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|v| *v /= c as f64);
    }
    sums
}

/// Linear interpolation of `frames` at `len` evenly spaced positions
/// spanning the first to the last frame.
pub fn resample(frames: &[Vec<f64>], len: usize) -> Vec<Vec<f64>> {
    let n = frames.len();
    (0..len)
        .map(|k| {
            if n == 1 || len == 1 {
                return frames[0].clone();
            }
            let s = k as f64 * (n - 1) as f64 / (len - 1) as f64;
            let i = (s.floor() as usize).min(n - 2);
            let f = s - i as f64;
            frames[i].iter().zip(&frames[i + 1]).map(|(a, b)| a + f * (b - a)).collect()
        })
        .collect()
}

/// Aligns every sample to the median-length one, resamples to three times
/// `retained` frames and keeps the middle third.
pub fn align_and_resample(label: &str, inputs: &[AlignInput], retained: usize) -> Result<AlignedClassSet> {
    if inputs.is_empty() {
        return Err(Error::InvalidInput(format!("class `{label}` has no samples")));
    }
    if retained == 0 {
        return Err(Error::InvalidInput("retained frame count must be positive".into()));
    }
    for (i, s) in inputs.iter().enumerate() {
        if s.features.len() < 3 {
            return Err(Error::InvalidInput(format!("class `{label}` sample {i}: fewer than 3 frames")));
        }
        if s.keys.len() != s.features.len() {
            return Err(Error::InvalidInput(format!("class `{label}` sample {i}: key length mismatch")));
        }
    }
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.sort_by_key(|&i| (inputs[i].features.len(), i));
    let reference = order[(order.len() - 1) / 2];
    let r = &inputs[reference];
    let samples = inputs
        .iter()
        .map(|s| {
            let path = dtw_align(r.keys, s.keys);
            let warped = warp_to_reference(&path, s.features, r.features.len());
            let full = resample(&warped, 3 * retained);
            full[retained..2 * retained].to_vec()
        })
        .collect();
    Ok(AlignedClassSet {
        label: label.to_string(),
        samples,
        reference,
    })
}

/// Per-frame class and global means with the between- and within-class
/// scatter matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatterAccumulator {
    /// `class_means[c][t]`.
    pub class_means: Vec<Vec<DVector<f64>>>,
    pub global_means: Vec<DVector<f64>>,
    pub between: DMatrix<f64>,
    pub within: DMatrix<f64>,
}

/// Adds `w·v·vᵀ` to `m`, filling both triangles from the same products.
fn add_outer(m: &mut DMatrix<f64>, v: &DVector<f64>, w: f64) {
    let d = v.len();
    for i in 0..d {
        for j in i..d {
            let x = w * v[i] * v[j];
            m[(i, j)] += x;
            if i != j {
                m[(j, i)] += x;
            }
        }
    }
}

pub fn accumulate_scatter(sets: &[AlignedClassSet]) -> Result<ScatterAccumulator> {
    let first = sets.first().ok_or_else(|| Error::InvalidInput("no classes".into()))?;
    let (t_len, dim) = (first.frames(), first.dim());
    for set in sets {
        if set.samples.is_empty() {
            return Err(Error::InvalidInput(format!("class `{}` has no samples", set.label)));
        }
        for s in &set.samples {
            if s.len() != t_len {
                return Err(Error::DimensionMismatch {
                    expected: t_len,
                    found: s.len(),
                });
            }
            if let Some(f) = s.iter().find(|f| f.len() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: f.len(),
                });
            }
        }
    }
    let total: usize = sets.iter().map(|s| s.samples.len()).sum();
    let class_means: Vec<Vec<DVector<f64>>> = sets
        .iter()
        .map(|set| {
            (0..t_len)
                .map(|t| {
                    let mut m = DVector::zeros(dim);
                    for s in &set.samples {
                        m += DVector::from_column_slice(&s[t]);
                    }
                    m / set.samples.len() as f64
                })
                .collect()
        })
        .collect();
    let global_means: Vec<DVector<f64>> = (0..t_len)
        .map(|t| {
            let mut m = DVector::zeros(dim);
            for (set, means) in sets.iter().zip(&class_means) {
                m += &means[t] * (set.samples.len() as f64 / total as f64);
            }
            m
        })
        .collect();
    let mut between = DMatrix::zeros(dim, dim);
    let mut within = DMatrix::zeros(dim, dim);
    for t in 0..t_len {
        for (set, means) in sets.iter().zip(&class_means) {
            add_outer(&mut between, &(&means[t] - &global_means[t]), 1.0);
            let weight = set.samples.len() as f64 / total as f64;
            for s in &set.samples {
                add_outer(&mut within, &(DVector::from_column_slice(&s[t]) - &means[t]), weight);
            }
        }
    }
    Ok(ScatterAccumulator {
        class_means,
        global_means,
        between,
        within,
    })
}

/// Projection onto the leading generalised eigenvectors.
#[derive(Clone, Debug, PartialEq)]
pub struct LdaTransform {
    /// D × M, one eigenvector per column.
    pub w: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    /// Retained frames per aligned sample used in fitting.
    pub frames: usize,
    /// Feature set the transform applies to.
    pub spec: String,
    /// Shrinkage actually used.
    pub gamma: f64,
}

impl LdaTransform {
    pub fn input_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# lda D={} M={} T={} gamma={} spec={}\n",
            self.input_dim(),
            self.output_dim(),
            self.frames,
            self.gamma,
            self.spec
        );
        let row = |vals: &mut dyn Iterator<Item = f64>| vals.map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
        out.push_str(&row(&mut self.eigenvalues.iter().copied()));
        out.push('\n');
        for i in 0..self.w.nrows() {
            out.push_str(&row(&mut self.w.row(i).iter().copied()));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::InvalidInput(format!("lda file: {m}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty"))?;
        let (mut d, mut m, mut t, mut gamma, mut spec) = (None, None, None, None, None);
        for tok in header.trim_start_matches('#').split_whitespace() {
            match tok.split_once('=') {
                Some(("D", v)) => d = v.parse::<usize>().ok(),
                Some(("M", v)) => m = v.parse::<usize>().ok(),
                Some(("T", v)) => t = v.parse::<usize>().ok(),
                Some(("gamma", v)) => gamma = v.parse::<f64>().ok(),
                Some(("spec", v)) => spec = Some(v.to_string()),
                _ => {}
            }
        }
        let (d, m, frames, gamma, spec) = (
            d.ok_or_else(|| bad("missing D"))?,
            m.ok_or_else(|| bad("missing M"))?,
            t.ok_or_else(|| bad("missing T"))?,
            gamma.ok_or_else(|| bad("missing gamma"))?,
            spec.ok_or_else(|| bad("missing spec"))?,
        );
        let parse_row = |line: Option<&str>, n: usize| -> Result<Vec<f64>> {
            let vals = line
                .ok_or_else(|| bad("truncated"))?
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| bad("bad number")))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: vals.len(),
                });
            }
            Ok(vals)
        };
        let eigenvalues = parse_row(lines.next(), m)?;
        let mut rows = Vec::with_capacity(d * m);
        for _ in 0..d {
            rows.extend(parse_row(lines.next(), m)?);
        }
        Ok(Self {
            w: DMatrix::from_row_slice(d, m, &rows),
            eigenvalues,
            frames,
            spec,
            gamma,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// The regularised within-class matrix `S^W + γ·(tr S^W / D)·I`. A zero
/// trace falls back to a unit scale so the shrinkage still takes effect.
pub fn regularised_within(within: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let d = within.nrows();
    let trace = within.trace();
    let scale = if trace > 0.0 { trace / d as f64 } else { 1.0 };
    within + DMatrix::identity(d, d) * (gamma * scale)
}

/// Top-`m` solutions of `S^B w = λ (S^W + γ′I) w`, with `γ` raised tenfold
/// while the regularised within-class matrix is not positive definite.
pub fn solve_transform(acc: &ScatterAccumulator, m: usize, gamma: f64, gamma_max: f64, frames: usize, spec: &str) -> Result<LdaTransform> {
    let d = acc.between.nrows();
    if m == 0 || m > d {
        return Err(Error::InvalidInput(format!("cannot keep {m} of {d} dimensions")));
    }
    if gamma < 0.0 {
        return Err(Error::InvalidInput("negative shrinkage".into()));
    }
    let mut g = gamma;
    let chol = loop {
        if let Some(c) = regularised_within(&acc.within, g).cholesky() {
            break c;
        }
        let next = if g == 0.0 { 1e-6 } else { g * 10.0 };
        if next > gamma_max {
            return Err(Error::Singular(g));
        }
        log::info!("within-class scatter singular at shrinkage {g}; retrying with {next}");
        g = next;
    };
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or(Error::Singular(g))?;
    let mut c = &l_inv * &acc.between * l_inv.transpose();
    c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let back = l_inv.transpose();
    let mut w = DMatrix::zeros(d, m);
    let mut eigenvalues = Vec::with_capacity(m);
    for (k, &i) in order.iter().take(m).enumerate() {
        let mut col = &back * eig.eigenvectors.column(i);
        let pivot = col.iter().copied().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            col = -col;
        }
        w.set_column(k, &col);
        eigenvalues.push(eig.eigenvalues[i].max(0.0));
    }
    Ok(LdaTransform {
        w,
        eigenvalues,
        frames,
        spec: spec.to_string(),
        gamma: g,
    })
}

/// Aligns each class, accumulates scatter and solves for `m` dimensions.
pub fn fit(classes: &[(String, Vec<AlignInput>)], m: usize, cfg: &crate::config::LdaConfig, spec: &str) -> Result<LdaTransform> {
    let sets = classes
        .iter()
        .map(|(label, inputs)| align_and_resample(label, inputs, cfg.retained_frames))
        .collect::<Result<Vec<_>>>()?;
    let acc = accumulate_scatter(&sets)?;
    solve_transform(&acc, m, cfg.shrinkage, cfg.shrinkage_max, cfg.retained_frames, spec)
}

/// `y_t = Wᵀ x_t` for every frame.
pub fn project(frames: &[Vec<f64>], lda: &LdaTransform) -> Result<Vec<Vec<f64>>> {
    let (d, m) = (lda.input_dim(), lda.output_dim());
    frames
        .iter()
        .map(|x| {
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: x.len(),
                });
            }
            Ok((0..m)
                .map(|j| (0..d).map(|i| lda.w[(i, j)] * x[i]).sum())
                .collect())
        })
        .collect()
}
