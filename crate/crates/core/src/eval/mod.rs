//! Evaluation protocols: signer-dependent leave-one-repetition-out and
//! signer-independent leave-one-signer-out, with reports.

mod corpus;
mod report;

pub use corpus::{cache_key, extract_manifest, extract_synthetic, Corpus};
pub use report::{confusion_svg, emit_report, EvalReport, Protocol, SignerResult};

use std::time::Instant;

use rayon::prelude::*;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::features::{Block, FeatureSample, FeatureSetSpec};
use crate::hmm::{classify, ClassifierBank};
use crate::signerlda::{fit, project, AlignInput, LdaTransform};

/// Everything learned from one training split.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldModel {
    pub lda: Option<LdaTransform>,
    pub bank: ClassifierBank,
    /// Vocabulary index of each model in the bank.
    pub classes: Vec<usize>,
}

impl FoldModel {
    /// Vocabulary index of the predicted class.
    pub fn predict(&self, sample: &FeatureSample, spec: &FeatureSetSpec) -> Result<usize> {
        let frames = self.frames_for(sample, spec)?;
        let (best, _) = classify(&self.bank, &frames)?;
        Ok(self.classes[best])
    }

    fn frames_for(&self, sample: &FeatureSample, spec: &FeatureSetSpec) -> Result<Vec<Vec<f64>>> {
        let selected = sample.select(spec)?.frames;
        match &self.lda {
            Some(lda) => project(&selected, lda),
            None => Ok(selected),
        }
    }
}

/// Trains a fold model from `train` only. With `lda_dims > 0` the
/// transform is fitted on posXY-aligned training samples first and the
/// models are trained in the projected space.
pub fn fit_fold(train: &[&FeatureSample], vocabulary: &[String], spec: &FeatureSetSpec, lda_dims: usize, cfg: &Config) -> Result<FoldModel> {
    let selected: Vec<Vec<Vec<f64>>> = train
        .iter()
        .map(|s| s.select(spec).map(|x| x.frames))
        .collect::<Result<_>>()?;
    let classes: Vec<usize> = (0..vocabulary.len())
        .filter(|&c| train.iter().any(|s| s.label == vocabulary[c]))
        .collect();
    if classes.is_empty() {
        return Err(Error::InvalidInput("no training samples".into()));
    }
    let members = |c: usize| -> Vec<usize> { (0..train.len()).filter(|&i| train[i].label == vocabulary[c]).collect() };

    let lda = if lda_dims > 0 {
        let keys_spec = FeatureSetSpec::new(vec![Block::PosXY])?;
        let keys: Vec<Vec<Vec<f64>>> = train
            .iter()
            .map(|s| s.select(&keys_spec).map(|x| x.frames))
            .collect::<Result<_>>()?;
        let groups: Vec<(String, Vec<AlignInput>)> = classes
            .iter()
            .map(|&c| {
                let inputs = members(c)
                    .into_iter()
                    .map(|i| AlignInput {
                        features: &selected[i],
                        keys: &keys[i],
                    })
                    .collect();
                (vocabulary[c].clone(), inputs)
            })
            .collect();
        let m = lda_dims.min(spec.dim());
        Some(fit(&groups, m, &cfg.lda, &spec.to_string())?)
    } else {
        None
    };
    let inputs: Vec<Vec<Vec<f64>>> = match &lda {
        Some(l) => selected.iter().map(|f| project(f, l)).collect::<Result<_>>()?,
        None => selected,
    };
    let groups: Vec<(String, Vec<&[Vec<f64>]>)> = classes
        .iter()
        .map(|&c| (vocabulary[c].clone(), members(c).into_iter().map(|i| inputs[i].as_slice()).collect()))
        .collect();
    let bank = ClassifierBank::train(&groups, &spec.to_string(), lda.clone(), &cfg.hmm)?;
    Ok(FoldModel { lda, bank, classes })
}

struct FoldOutcome {
    signer: usize,
    /// (true class, predicted class) per test sample.
    pairs: Vec<(usize, usize)>,
}

fn finish(
    corpus: &Corpus,
    protocol: Protocol,
    spec: &FeatureSetSpec,
    lda_dims: usize,
    cfg: &Config,
    signers: &[String],
    outcomes: Vec<FoldOutcome>,
    started: Instant,
) -> EvalReport {
    let c = corpus.vocabulary.len();
    let mut confusion = vec![vec![0usize; c]; c];
    let mut results = Vec::new();
    for (si, signer) in signers.iter().enumerate() {
        let folds: Vec<&FoldOutcome> = outcomes.iter().filter(|o| o.signer == si && !o.pairs.is_empty()).collect();
        if folds.is_empty() {
            continue;
        }
        let (mut correct, mut total, mut acc_sum) = (0, 0, 0.0);
        for f in &folds {
            let ok = f.pairs.iter().filter(|(t, p)| t == p).count();
            acc_sum += ok as f64 / f.pairs.len() as f64;
            correct += ok;
            total += f.pairs.len();
            for &(t, p) in &f.pairs {
                confusion[t][p] += 1;
            }
        }
        results.push(SignerResult {
            signer: signer.clone(),
            accuracy: acc_sum / folds.len() as f64,
            correct,
            total,
            folds: folds.len(),
        });
    }
    let mean_accuracy = if results.is_empty() {
        0.0
    } else {
        results.iter().map(|r| r.accuracy).sum::<f64>() / results.len() as f64
    };
    EvalReport {
        protocol,
        feature_set: spec.to_string(),
        lda_dims,
        vocabulary: corpus.vocabulary.clone(),
        signers: results,
        mean_accuracy,
        confusion,
        runtime_seconds: started.elapsed().as_secs_f64(),
        config: cfg.to_kv(),
    }
}

/// Signer-dependent evaluation: for each signer and each repetition index,
/// train on that signer's other repetitions and test on the held-out one.
pub fn run_sd_loocv(corpus: &Corpus, spec: &FeatureSetSpec, cfg: &Config) -> Result<EvalReport> {
    let started = Instant::now();
    let signers = corpus.signers();
    let mut tasks = Vec::new();
    for (si, signer) in signers.iter().enumerate() {
        let own: Vec<usize> = (0..corpus.samples.len()).filter(|&i| &corpus.samples[i].signer == signer).collect();
        let short = corpus.vocabulary.iter().find(|label| {
            let n = own.iter().filter(|&&i| &corpus.samples[i].label == *label).count();
            n == 1
        });
        if let Some(label) = short {
            log::warn!("signer {signer}: class {label} has a single sample; signer skipped");
            continue;
        }
        let mut reps: Vec<usize> = own.iter().map(|&i| corpus.repetitions[i]).collect();
        reps.sort_unstable();
        reps.dedup();
        for r in reps {
            tasks.push((si, own.clone(), r));
        }
    }
    let outcomes = tasks
        .par_iter()
        .map(|(si, own, r)| {
            let (test, train): (Vec<usize>, Vec<usize>) = own.iter().partition(|&&i| corpus.repetitions[i] == *r);
            let train: Vec<&FeatureSample> = train.iter().map(|&i| &corpus.samples[i]).collect();
            let model = fit_fold(&train, &corpus.vocabulary, spec, 0, cfg)?;
            let pairs = test
                .iter()
                .map(|&i| {
                    let s = &corpus.samples[i];
                    Ok((corpus.class_index(&s.label).expect("validated"), model.predict(s, spec)?))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(FoldOutcome { signer: *si, pairs })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(corpus, Protocol::SdLoocv, spec, 0, cfg, &signers, outcomes, started))
}

/// Fold model for every held-out signer, trained on the remaining signers.
pub fn si_fold_models(corpus: &Corpus, spec: &FeatureSetSpec, lda_dims: usize, cfg: &Config) -> Result<Vec<(String, FoldModel)>> {
    let signers = corpus.signers();
    if signers.len() < 2 {
        return Err(Error::InvalidInput("signer-independent evaluation needs at least two signers".into()));
    }
    signers
        .par_iter()
        .map(|held| {
            let train: Vec<&FeatureSample> = corpus.samples.iter().filter(|s| &s.signer != held).collect();
            Ok((held.clone(), fit_fold(&train, &corpus.vocabulary, spec, lda_dims, cfg)?))
        })
        .collect()
}

/// Signer-independent evaluation: each signer is tested on models (and,
/// with `lda_dims > 0`, a transform) learned from the other signers.
pub fn run_si_loso(corpus: &Corpus, spec: &FeatureSetSpec, lda_dims: usize, cfg: &Config) -> Result<EvalReport> {
    let started = Instant::now();
    let signers = corpus.signers();
    let models = si_fold_models(corpus, spec, lda_dims, cfg)?;
    let outcomes = models
        .par_iter()
        .enumerate()
        .map(|(si, (held, model))| {
            let pairs = corpus
                .samples
                .iter()
                .filter(|s| &s.signer == held)
                .map(|s| Ok((corpus.class_index(&s.label).expect("validated"), model.predict(s, spec)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(FoldOutcome { signer: si, pairs })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(corpus, Protocol::SiLoso, spec, lda_dims, cfg, &signers, outcomes, started))
}
