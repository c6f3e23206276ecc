//! Left-to-right HMMs with diagonal Gaussian emissions, one per sign.

use std::path::Path;

use rayon::prelude::*;

use crate::config::{HmmConfig, Termination};
use crate::error::{Error, Result};
use crate::signerlda::LdaTransform;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// States `0` (entry) and `N + 1` (exit) are non-emitting; `1..=N` emit.
#[derive(Clone, Debug, PartialEq)]
pub struct HmmModel {
    pub label: String,
    /// `(N + 2) × (N + 2)` row-stochastic transition matrix.
    pub trans: Vec<Vec<f64>>,
    /// Per emitting state.
    pub means: Vec<Vec<f64>>,
    pub vars: Vec<Vec<f64>>,
    pub termination: Termination,
}

impl HmmModel {
    /// Chain of `means.len()` states, each moving on with `1 - self_prob`;
    /// the last state leaves to the exit.
    pub fn left_to_right(label: &str, self_prob: f64, means: Vec<Vec<f64>>, vars: Vec<Vec<f64>>, termination: Termination) -> Self {
        let n = means.len();
        let mut trans = vec![vec![0.0; n + 2]; n + 2];
        trans[0][1] = 1.0;
        for k in 1..=n {
            trans[k][k] = self_prob;
            trans[k][k + 1] = 1.0 - self_prob;
        }
        trans[n + 1][n + 1] = 1.0;
        Self {
            label: label.to_string(),
            trans,
            means,
            vars,
            termination,
        }
    }

    pub fn states(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    fn exit(&self) -> usize {
        self.states() + 1
    }

    /// Log density of `x` under emitting state `k` (0-based).
    pub fn log_emission(&self, k: usize, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for ((v, m), var) in x.iter().zip(&self.means[k]).zip(&self.vars[k]) {
            let d = v - m;
            s += LN_2PI + var.ln() + d * d / var;
        }
        -0.5 * s
    }

    fn check(&self, frames: &[Vec<f64>]) -> Result<()> {
        if frames.is_empty() {
            return Err(Error::InvalidInput("empty observation sequence".into()));
        }
        if let Some(f) = frames.iter().find(|f| f.len() != self.dim()) {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: f.len(),
            });
        }
        Ok(())
    }

    /// Probability of ending from emitting state `k` (0-based).
    fn final_weight(&self, k: usize) -> f64 {
        match self.termination {
            Termination::AnyState => 1.0,
            Termination::Exit => self.trans[k + 1][self.exit()],
        }
    }

    pub fn forward_loglik(&self, frames: &[Vec<f64>]) -> Result<f64> {
        self.check(frames)?;
        Ok(self.scaled_passes(frames, false).loglik)
    }

    /// Scaled forward (and optionally backward) recursions. Each frame's
    /// emissions are shifted by the largest log prior-times-emission so the
    /// reachable states never all underflow.
    fn scaled_passes(&self, frames: &[Vec<f64>], backward: bool) -> Passes {
        let (n, t_len) = (self.states(), frames.len());
        let mut emit = vec![vec![0.0; n]; t_len];
        let mut alpha = vec![vec![0.0; n]; t_len];
        let mut scale = vec![0.0; t_len];
        let mut loglik = 0.0;
        for (t, x) in frames.iter().enumerate() {
            let logs: Vec<f64> = (0..n).map(|k| self.log_emission(k, x)).collect();
            let prior: Vec<f64> = (0..n)
                .map(|j| {
                    if t == 0 {
                        self.trans[0][j + 1]
                    } else {
                        (0..n).map(|i| alpha[t - 1][i] * self.trans[i + 1][j + 1]).sum()
                    }
                })
                .collect();
            let top = (0..n)
                .filter(|&j| prior[j] > 0.0)
                .map(|j| prior[j].ln() + logs[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if !top.is_finite() {
                return Passes::impossible(n, t_len);
            }
            for j in 0..n {
                emit[t][j] = (logs[j] - top).min(600.0).exp();
                alpha[t][j] = prior[j] * emit[t][j];
            }
            scale[t] = alpha[t].iter().sum();
            if !(scale[t] > 0.0) {
                return Passes::impossible(n, t_len);
            }
            alpha[t].iter_mut().for_each(|a| *a /= scale[t]);
            loglik += top + scale[t].ln();
        }
        let finish: f64 = (0..n).map(|k| alpha[t_len - 1][k] * self.final_weight(k)).sum();
        if finish <= 0.0 {
            return Passes::impossible(n, t_len);
        }
        loglik += finish.ln();
        let mut beta = Vec::new();
        if backward {
            beta = vec![vec![0.0; n]; t_len];
            for k in 0..n {
                beta[t_len - 1][k] = self.final_weight(k) / finish;
            }
            for t in (0..t_len - 1).rev() {
                for i in 0..n {
                    beta[t][i] = (0..n)
                        .map(|j| self.trans[i + 1][j + 1] * emit[t + 1][j] * beta[t + 1][j])
                        .sum::<f64>()
                        / scale[t + 1];
                }
            }
        }
        Passes {
            loglik,
            alpha,
            beta,
            emit,
            scale,
        }
    }

    pub fn to_text(&self) -> String {
        let term = match self.termination {
            Termination::AnyState => "any_state",
            Termination::Exit => "exit",
        };
        let mut out = format!("# hmm label={} N={} D={} termination={}\n", self.label, self.states(), self.dim(), term);
        let row = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        for r in &self.trans {
            out.push_str(&row(r));
            out.push('\n');
        }
        for (m, v) in self.means.iter().zip(&self.vars) {
            out.push_str(&row(m));
            out.push('\n');
            out.push_str(&row(v));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::InvalidInput(format!("hmm file: {m}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty"))?;
        let (mut label, mut n, mut d, mut termination) = (None, None, None, None);
        for tok in header.trim_start_matches('#').split_whitespace() {
            match tok.split_once('=') {
                Some(("label", v)) => label = Some(v.to_string()),
                Some(("N", v)) => n = v.parse::<usize>().ok(),
                Some(("D", v)) => d = v.parse::<usize>().ok(),
                Some(("termination", "any_state")) => termination = Some(Termination::AnyState),
                Some(("termination", "exit")) => termination = Some(Termination::Exit),
                _ => {}
            }
        }
        let label = label.ok_or_else(|| bad("missing label"))?;
        let n = n.ok_or_else(|| bad("missing N"))?;
        let d = d.ok_or_else(|| bad("missing D"))?;
        let termination = termination.ok_or_else(|| bad("missing termination"))?;
        let mut row = |len: usize| -> Result<Vec<f64>> {
            let vals = lines
                .next()
                .ok_or_else(|| bad("truncated"))?
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| bad("bad number")))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != len {
                return Err(Error::DimensionMismatch {
                    expected: len,
                    found: vals.len(),
                });
            }
            Ok(vals)
        };
        let trans = (0..n + 2).map(|_| row(n + 2)).collect::<Result<Vec<_>>>()?;
        let mut means = Vec::with_capacity(n);
        let mut vars = Vec::with_capacity(n);
        for _ in 0..n {
            means.push(row(d)?);
            vars.push(row(d)?);
        }
        Ok(Self {
            label,
            trans,
            means,
            vars,
            termination,
        })
    }
}

struct Passes {
    loglik: f64,
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
    emit: Vec<Vec<f64>>,
    scale: Vec<f64>,
}

impl Passes {
    fn impossible(n: usize, t_len: usize) -> Self {
        Self {
            loglik: f64::NEG_INFINITY,
            alpha: vec![vec![0.0; n]; t_len],
            beta: vec![vec![0.0; n]; t_len],
            emit: vec![vec![0.0; n]; t_len],
            scale: vec![0.0; t_len],
        }
    }
}

fn floor_vars(vars: &mut [f64], floor: f64) {
    for v in vars {
        if !(*v >= floor) {
            *v = floor;
        }
    }
}

/// Flat start: every sequence is cut into `states` equal segments and each
/// state takes the pooled mean and variance of its segment. States that
/// receive no frames use the pooled statistics of all frames.
pub fn init_model(label: &str, samples: &[&[Vec<f64>]], cfg: &HmmConfig) -> Result<HmmModel> {
    let first = samples
        .iter()
        .find(|s| !s.is_empty())
        .ok_or_else(|| Error::InvalidInput(format!("no training frames for `{label}`")))?;
    let dim = first[0].len();
    let n = cfg.states;
    if n == 0 {
        return Err(Error::InvalidInput("an HMM needs at least one state".into()));
    }
    let mut sums = vec![vec![0.0; dim]; n + 1];
    let mut sq = vec![vec![0.0; dim]; n + 1];
    let mut counts = vec![0usize; n + 1];
    for s in samples {
        let t_len = s.len();
        for (t, x) in s.iter().enumerate() {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: x.len(),
                });
            }
            let k = t * n / t_len;
            for slot in [k, n] {
                for (d, v) in x.iter().enumerate() {
                    sums[slot][d] += v;
                    sq[slot][d] += v * v;
                }
                counts[slot] += 1;
            }
        }
    }
    let stats = |slot: usize| -> (Vec<f64>, Vec<f64>) {
        let c = counts[slot] as f64;
        let mean: Vec<f64> = sums[slot].iter().map(|s| s / c).collect();
        let mut var: Vec<f64> = (0..dim).map(|d| sq[slot][d] / c - mean[d] * mean[d]).collect();
        floor_vars(&mut var, cfg.variance_floor);
        (mean, var)
    };
    let (means, vars): (Vec<_>, Vec<_>) = (0..n).map(|k| stats(if counts[k] > 0 { k } else { n })).unzip();
    Ok(HmmModel::left_to_right(label, cfg.self_prob, means, vars, cfg.termination))
}

/// Expected counts gathered over all training sequences.
struct Stats {
    loglik: f64,
    trans: Vec<Vec<f64>>,
    occupancy: Vec<f64>,
    sum: Vec<Vec<f64>>,
    sum_sq: Vec<Vec<f64>>,
}

fn expectation(model: &HmmModel, samples: &[&[Vec<f64>]]) -> Stats {
    let (n, dim) = (model.states(), model.dim());
    let mut st = Stats {
        loglik: 0.0,
        trans: vec![vec![0.0; n + 2]; n + 2],
        occupancy: vec![0.0; n],
        sum: vec![vec![0.0; dim]; n],
        sum_sq: vec![vec![0.0; dim]; n],
    };
    for frames in samples {
        let p = model.scaled_passes(frames, true);
        if !p.loglik.is_finite() {
            log::warn!("`{}`: training sequence impossible under the model; skipped", model.label);
            continue;
        }
        st.loglik += p.loglik;
        let t_len = frames.len();
        for t in 0..t_len {
            for k in 0..n {
                let g = p.alpha[t][k] * p.beta[t][k];
                if t == 0 {
                    st.trans[0][k + 1] += g;
                }
                if t == t_len - 1 && model.termination == Termination::Exit {
                    st.trans[k + 1][n + 1] += g;
                }
                st.occupancy[k] += g;
                for (d, v) in frames[t].iter().enumerate() {
                    st.sum[k][d] += g * v;
                    st.sum_sq[k][d] += g * v * v;
                }
            }
            if t + 1 < t_len {
                for i in 0..n {
                    for j in 0..n {
                        let a = model.trans[i + 1][j + 1];
                        if a > 0.0 {
                            st.trans[i + 1][j + 1] += p.alpha[t][i] * a * p.emit[t + 1][j] * p.beta[t + 1][j] / p.scale[t + 1];
                        }
                    }
                }
            }
        }
    }
    st
}

fn maximisation(model: &HmmModel, st: &Stats, floor: f64) -> HmmModel {
    let n = model.states();
    let mut next = model.clone();
    for i in 0..n + 1 {
        let total: f64 = st.trans[i].iter().sum();
        if total > 0.0 {
            next.trans[i] = st.trans[i].iter().map(|c| c / total).collect();
        }
    }
    for k in 0..n {
        let occ = st.occupancy[k];
        if occ <= 1e-12 {
            continue;
        }
        let mean: Vec<f64> = st.sum[k].iter().map(|s| s / occ).collect();
        let mut var: Vec<f64> = st.sum_sq[k]
            .iter()
            .zip(&mean)
            .map(|(s, m)| s / occ - m * m)
            .collect();
        floor_vars(&mut var, floor);
        next.means[k] = mean;
        next.vars[k] = var;
    }
    next
}

/// Result of Baum-Welch re-estimation.
#[derive(Clone, Debug, PartialEq)]
pub struct Trained {
    pub model: HmmModel,
    /// Total log-likelihood of every model visited, starting with the input.
    pub history: Vec<f64>,
}

/// Multi-sequence Baum-Welch. Stops once the total log-likelihood improves
/// by less than `tol` or after `max_iter` re-estimations.
pub fn baum_welch(model: &HmmModel, samples: &[&[Vec<f64>]], cfg: &HmmConfig) -> Result<Trained> {
    if samples.is_empty() {
        return Err(Error::InvalidInput(format!("no training samples for `{}`", model.label)));
    }
    for s in samples {
        model.check(s)?;
    }
    let mut current = model.clone();
    let mut st = expectation(&current, samples);
    let mut history = vec![st.loglik];
    for _ in 0..cfg.max_iter {
        let next = maximisation(&current, &st, cfg.variance_floor);
        let next_st = expectation(&next, samples);
        let gain = next_st.loglik - st.loglik;
        history.push(next_st.loglik);
        current = next;
        st = next_st;
        if !(gain >= cfg.tol) {
            break;
        }
    }
    Ok(Trained { model: current, history })
}

/// Flat start followed by Baum-Welch.
pub fn train_model(label: &str, samples: &[&[Vec<f64>]], cfg: &HmmConfig) -> Result<HmmModel> {
    let init = init_model(label, samples, cfg)?;
    Ok(baum_welch(&init, samples, cfg)?.model)
}

/// One model per class, in vocabulary order.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierBank {
    pub models: Vec<HmmModel>,
    pub spec: String,
    pub lda: Option<LdaTransform>,
}

impl ClassifierBank {
    /// Trains every class in parallel; `classes` gives labels in vocabulary
    /// order with their training sequences.
    pub fn train(classes: &[(String, Vec<&[Vec<f64>]>)], spec: &str, lda: Option<LdaTransform>, cfg: &HmmConfig) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::InvalidInput("no classes to train".into()));
        }
        let models = classes
            .par_iter()
            .map(|(label, samples)| train_model(label, samples, cfg))
            .collect::<Result<Vec<_>>>()?;
        let dim = models[0].dim();
        if let Some(m) = models.iter().find(|m| m.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: m.dim(),
            });
        }
        Ok(Self {
            models,
            spec: spec.to_string(),
            lda,
        })
    }

    pub fn labels(&self) -> Vec<&str> {
        self.models.iter().map(|m| m.label.as_str()).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut index = format!("spec={}\nlda={}\n", self.spec, self.lda.is_some());
        for (i, m) in self.models.iter().enumerate() {
            let name = format!("model_{i:03}.txt");
            let path = dir.join(&name);
            std::fs::write(&path, m.to_text()).map_err(|e| Error::io(&path, e))?;
            index.push_str(&format!("model={name}\n"));
        }
        if let Some(lda) = &self.lda {
            lda.save(&dir.join("lda.txt"))?;
        }
        let path = dir.join("bank.txt");
        std::fs::write(&path, index).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("bank.txt");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let (mut spec, mut has_lda, mut models) = (String::new(), false, Vec::new());
        for line in text.lines() {
            match line.split_once('=') {
                Some(("spec", v)) => spec = v.to_string(),
                Some(("lda", v)) => has_lda = v == "true",
                Some(("model", v)) => {
                    let p = dir.join(v);
                    let t = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                    models.push(HmmModel::from_text(&t)?);
                }
                _ => return Err(Error::format(&path, format!("unexpected line `{line}`"))),
            }
        }
        let lda = if has_lda {
            Some(LdaTransform::load(&dir.join("lda.txt"))?)
        } else {
            None
        };
        Ok(Self { models, spec, lda })
    }
}

/// Index of the most likely class (earliest on ties) and every class score.
pub fn classify(bank: &ClassifierBank, frames: &[Vec<f64>]) -> Result<(usize, Vec<f64>)> {
    if bank.models.is_empty() {
        return Err(Error::InvalidInput("empty classifier bank".into()));
    }
    let scores = bank
        .models
        .iter()
        .map(|m| m.forward_loglik(frames))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok((best, scores))
}
