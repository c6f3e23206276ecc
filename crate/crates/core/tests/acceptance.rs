//! End-to-end acceptance run. Every criterion is evaluated even when an
//! earlier one fails; one line per criterion is printed and the test fails
//! if any of them did.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use signrec::config::{Eccentricity, HmmConfig, Termination};
use signrec::dataio::{SynthSpec, SyntheticCorpus};
use signrec::eval::{emit_report, extract_synthetic, run_sd_loocv, run_si_loso, Corpus, EvalReport};
use signrec::features::{geometric_features, hog_patch, hu_moments, shape_context, FeatureSetSpec, HOG_SIZE};
use signrec::hmm::{baum_welch, init_model, HmmModel};
use signrec::image::BlobMask;
use signrec::pipeline::{general_skin_model, score_against_truth, track_sequence, SegmentationScore};
use signrec::signerlda::{accumulate_scatter, dtw_align, solve_transform, AlignedClassSet};
use signrec::Config;

const CORPUS_SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---- oracles -------------------------------------------------------------

fn stochastic(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

fn random_hmm(rng: &mut ChaCha8Rng, n: usize, d: usize, termination: Termination) -> HmmModel {
    let mut trans = vec![vec![0.0; n + 2]; n + 2];
    trans[0][1..=n].copy_from_slice(&stochastic(rng, n));
    for i in 1..=n {
        trans[i][1..=n + 1].copy_from_slice(&stochastic(rng, n + 1));
    }
    trans[n + 1][n + 1] = 1.0;
    HmmModel {
        label: "r".into(),
        trans,
        means: (0..n).map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect(),
        vars: (0..n).map(|_| (0..d).map(|_| rng.gen_range(0.2..2.0)).collect()).collect(),
        termination,
    }
}

fn gauss_density(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(var)
        .map(|((x, m), v)| (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt())
        .product()
}

/// Sum over all state paths of the joint probability.
fn hmm_brute_force(model: &HmmModel, x: &[Vec<f64>]) -> f64 {
    let n = model.means.len();
    let t_len = x.len();
    let mut total = 0.0;
    for code in 0..n.pow(t_len as u32) {
        let path: Vec<usize> = (0..t_len).map(|t| code / n.pow(t as u32) % n).collect();
        let mut p = model.trans[0][path[0] + 1];
        for t in 0..t_len {
            if t > 0 {
                p *= model.trans[path[t - 1] + 1][path[t] + 1];
            }
            p *= gauss_density(&x[t], &model.means[path[t]], &model.vars[path[t]]);
        }
        if model.termination == Termination::Exit {
            p *= model.trans[path[t_len - 1] + 1][n + 1];
        }
        total += p;
    }
    total.ln()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Minimum cost over every monotone path with unit steps.
fn dtw_brute_force(a: &[Vec<f64>], b: &[Vec<f64>], i: usize, j: usize) -> f64 {
    let here = sq_dist(&a[i], &b[j]);
    if i + 1 == a.len() && j + 1 == b.len() {
        return here;
    }
    let mut best = f64::INFINITY;
    if i + 1 < a.len() {
        best = best.min(dtw_brute_force(a, b, i + 1, j));
    }
    if j + 1 < b.len() {
        best = best.min(dtw_brute_force(a, b, i, j + 1));
    }
    if i + 1 < a.len() && j + 1 < b.len() {
        best = best.min(dtw_brute_force(a, b, i + 1, j + 1));
    }
    here + best
}

fn inverse3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let c = |r: usize, k: usize| {
        let (r1, r2) = ((r + 1) % 3, (r + 2) % 3);
        let (k1, k2) = ((k + 1) % 3, (k + 2) % 3);
        m[r1][k1] * m[r2][k2] - m[r1][k2] * m[r2][k1]
    };
    let det = m[0][0] * c(0, 0) + m[0][1] * c(0, 1) + m[0][2] * c(0, 2);
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for k in 0..3 {
            out[k][r] = c(r, k) / det;
        }
    }
    out
}

fn irregular_blob(seed: u64) -> BlobMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut px = std::collections::BTreeSet::new();
    let (mut x, mut y) = (0i64, 0i64);
    for _ in 0..600 {
        for dy in 0..3 {
            for dx in 0..3 {
                px.insert((x + dx, y + dy));
            }
        }
        match rng.gen_range(0..5) {
            0 => x += 1,
            1 => x -= 1,
            2 => y += 1,
            3 => y -= 1,
            _ => x += 1,
        }
    }
    BlobMask::from_pixels(&px.into_iter().collect::<Vec<_>>())
}

fn transformed(b: &BlobMask, f: impl Fn(i64, i64) -> (i64, i64)) -> BlobMask {
    BlobMask::from_pixels(&b.pixels().map(|(x, y)| f(x, y)).collect::<Vec<_>>())
}

// ---- criteria ------------------------------------------------------------

fn hmm_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let instances = 150;
    for i in 0..instances {
        let (n, t_len, d) = (rng.gen_range(1..=4), rng.gen_range(1..=6), rng.gen_range(1..=3));
        let term = if i % 2 == 0 { Termination::AnyState } else { Termination::Exit };
        let model = random_hmm(&mut rng, n, d, term);
        let x: Vec<Vec<f64>> = (0..t_len).map(|_| (0..d).map(|_| rng.gen_range(-2.5..2.5)).collect()).collect();
        let ours = model.forward_loglik(&x).expect("valid input");
        let oracle = hmm_brute_force(&model, &x);
        worst = worst.max((ours - oracle).abs() / oracle.abs().max(1e-300));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-9 && secs < 10.0, format!("{instances} instances, max rel err {worst:.2e}, {secs:.2}s"))
}

fn dtw_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    let pairs = 150;
    for _ in 0..pairs {
        let (d, la, lb) = (rng.gen_range(1..=3), rng.gen_range(1..=6), rng.gen_range(1..=6));
        let mut seq = |len: usize| -> Vec<Vec<f64>> { (0..len).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect() };
        let (a, b) = (seq(la), seq(lb));
        let ours = dtw_align(&a, &b).cost;
        let oracle = dtw_brute_force(&a, &b, 0, 0);
        worst = worst.max((ours - oracle).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-12 && secs < 10.0, format!("{pairs} pairs, max abs err {worst:.2e}, {secs:.2}s"))
}

fn em_monotone() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let runs = 25;
    let mut worst_drop: f64 = 0.0;
    let mut iterations = 0;
    for _ in 0..runs {
        let d = rng.gen_range(1..=3);
        let cfg = HmmConfig {
            states: rng.gen_range(2..=5),
            max_iter: 30,
            tol: 0.0,
            ..HmmConfig::default()
        };
        let samples: Vec<Vec<Vec<f64>>> = (0..rng.gen_range(2..6))
            .map(|_| {
                let len = rng.gen_range(cfg.states + 2..25);
                (0..len).map(|t| (0..d).map(|k| (t as f64 * 0.3 + k as f64).sin() + rng.gen_range(-0.5..0.5)).collect()).collect()
            })
            .collect();
        let refs: Vec<&[Vec<f64>]> = samples.iter().map(Vec::as_slice).collect();
        let init = init_model("em", &refs, &cfg).expect("flat start");
        let trained = baum_welch(&init, &refs, &cfg).expect("training");
        iterations += trained.history.len() - 1;
        for w in trained.history.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
    }
    outcome(worst_drop <= 1e-8, format!("{runs} runs, {iterations} iterations, largest decrease {worst_drop:.2e}"))
}

fn lda_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mix = [[1.0, 0.4, -0.2], [0.0, 0.7, 0.5], [0.3, 0.0, 1.2]];
    let mut draw = |mean: [f64; 3]| -> Vec<Vec<Vec<f64>>> {
        (0..200)
            .map(|_| {
                let z: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                vec![(0..3).map(|r| mean[r] + (0..3).map(|k| mix[r][k] * z[k]).sum::<f64>()).collect()]
            })
            .collect()
    };
    let (mu1, mu2) = ([0.0, 0.0, 0.0], [1.0, -0.5, 0.8]);
    let sets = vec![
        AlignedClassSet {
            label: "a".into(),
            samples: draw(mu1),
            reference: 0,
        },
        AlignedClassSet {
            label: "b".into(),
            samples: draw(mu2),
            reference: 0,
        },
    ];
    // Fisher direction from sample statistics.
    let means: Vec<[f64; 3]> = sets
        .iter()
        .map(|s| {
            let mut m = [0.0; 3];
            for x in &s.samples {
                for k in 0..3 {
                    m[k] += x[0][k] / s.samples.len() as f64;
                }
            }
            m
        })
        .collect();
    let mut sw = [[0.0; 3]; 3];
    for (s, m) in sets.iter().zip(&means) {
        for x in &s.samples {
            for r in 0..3 {
                for k in 0..3 {
                    sw[r][k] += 0.5 * (x[0][r] - m[r]) * (x[0][k] - m[k]);
                }
            }
        }
    }
    let inv = inverse3(sw);
    let diff: Vec<f64> = (0..3).map(|k| means[0][k] - means[1][k]).collect();
    let fisher: Vec<f64> = (0..3).map(|r| (0..3).map(|k| inv[r][k] * diff[k]).sum()).collect();

    let acc = accumulate_scatter(&sets).expect("scatter");
    let lda = solve_transform(&acc, 1, 0.0, 1.0, 1, "test").expect("solve");
    let w: Vec<f64> = (0..3).map(|r| lda.w[(r, 0)]).collect();
    let dot: f64 = w.iter().zip(&fisher).map(|(a, b)| a * b).sum();
    let cos = dot.abs() / (w.iter().map(|v| v * v).sum::<f64>().sqrt() * fisher.iter().map(|v| v * v).sum::<f64>().sqrt());

    let single = accumulate_scatter(&sets[..1]).expect("scatter");
    let sb_zero = single.between.iter().all(|&v| v == 0.0);
    let one_each: Vec<AlignedClassSet> = sets
        .iter()
        .map(|s| AlignedClassSet {
            samples: s.samples[..1].to_vec(),
            ..s.clone()
        })
        .collect();
    let sw_zero = accumulate_scatter(&one_each).expect("scatter").within.iter().all(|&v| v == 0.0);
    outcome(
        cos >= 0.999 && sb_zero && sw_zero,
        format!("|cos| to Fisher direction {cos:.6}, single-class S^B zero {sb_zero}, one-sample S^W zero {sw_zero}"),
    )
}

fn descriptor_invariances() -> Outcome {
    let blob = irregular_blob(15);
    let moved = transformed(&blob, |x, y| (x + 37, y - 21));
    let turned = transformed(&blob, |x, y| (-y, x));
    let hu = hu_moments(&blob).expect("hu");
    let hu_t = hu_moments(&moved).expect("hu");
    let hu_r = hu_moments(&turned).expect("hu");
    let max_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let hu_trans = max_diff(&hu, &hu_t);
    let hu_rot = max_diff(&hu, &hu_r);
    let sc = shape_context(&blob).expect("sc");
    let sc_t = shape_context(&moved).expect("sc");
    let sc_sum = sc.iter().sum::<f64>();
    let sc_trans = max_diff(&sc, &sc_t);
    let hog_flat = hog_patch(&vec![0.6; HOG_SIZE * HOG_SIZE]);
    let hog_zero = hog_flat.iter().all(|&v| v == 0.0);
    let square = BlobMask::from_pixels(&(0..12).flat_map(|y| (0..12).map(move |x| (x, y))).collect::<Vec<_>>());
    let s = geometric_features(&square, Eccentricity::AsPrinted).expect("s");
    let pass = hu_trans <= 1e-12 && hu_rot <= 1e-9 && (sc_sum - 1.0).abs() <= 1e-9 && sc_trans <= 1e-9 && hog_zero && s[3].abs() <= 1e-12 && s[2] == 1.0;
    outcome(
        pass,
        format!(
            "Hu translation {hu_trans:.1e}, rotation {hu_rot:.1e}; SC sum {sc_sum:.12}, translation {sc_trans:.1e}; HOG flat zero {hog_zero}; square c={:.1e} s={}",
            s[3], s[2]
        ),
    )
}

fn segmentation_gate(corpus: &SyntheticCorpus, cfg: &Config) -> Outcome {
    let general = general_skin_model(cfg.segmentation.bins);
    let mut score = SegmentationScore::default();
    let mut sequences = 0;
    for i in 0..corpus.len() {
        let (_, rep, _) = corpus.coordinates(i);
        if rep != 0 {
            continue;
        }
        let sample = corpus.render(i);
        let trace = track_sequence(&sample.sequence, &general, cfg, false).expect("tracking");
        score.merge(score_against_truth(&trace, &sample.truth));
        sequences += 1;
    }
    let (iou, err) = (score.mean_iou(), score.mean_occluded_error());
    outcome(
        iou >= 0.8 && err <= 10.0,
        format!(
            "{sequences} sequences: IoU {iou:.3} over {} hand-frames; occluded centroid error {err:.2}px (max {:.2}) over {}",
            score.ious.len(),
            score.max_occluded_error(),
            score.occluded_errors.len()
        ),
    )
}

fn sd_gate(features: &Corpus, extract_secs: f64, cfg: &Config) -> Outcome {
    let start = Instant::now();
    let spec: FeatureSetSpec = "pos,S,HOG".parse().expect("spec");
    let report = run_sd_loocv(features, &spec, cfg).expect("sd evaluation");
    let secs = extract_secs + start.elapsed().as_secs_f64();
    let per: Vec<String> = report.signers.iter().map(|s| format!("{} {:.3}", s.signer, s.accuracy)).collect();
    outcome(
        report.mean_accuracy >= 0.90 && secs < 300.0,
        format!("(pos,S,HOG) mean {:.3} [{}], {secs:.0}s including extraction", report.mean_accuracy, per.join(", ")),
    )
}

fn si_gate(features: &Corpus, extract_secs: f64, cfg: &Config) -> Outcome {
    let start = Instant::now();
    let spec: FeatureSetSpec = "pos,S".parse().expect("spec");
    let base = run_si_loso(features, &spec, 0, cfg).expect("si baseline");
    let lda = run_si_loso(features, &spec, 8, cfg).expect("si lda");
    let secs = extract_secs + start.elapsed().as_secs_f64();
    let gain = lda.mean_accuracy - base.mean_accuracy;
    outcome(
        gain >= 0.05 && secs < 600.0,
        format!(
            "(pos,S) baseline {:.3}, LDA(8) {:.3}, gain {:+.1} points, {secs:.0}s including extraction",
            base.mean_accuracy,
            lda.mean_accuracy,
            100.0 * gain
        ),
    )
}

fn depth_gate(cfg: &Config) -> Outcome {
    let spec = SynthSpec {
        classes: 6,
        signers: 2,
        samples_per_signer: 4,
        depth_only_pairs: 2,
        ..SynthSpec::default()
    };
    let corpus = SyntheticCorpus::new(spec, CORPUS_SEED).expect("corpus");
    let features = extract_synthetic(&corpus, cfg, None).expect("extraction");
    let xy = run_sd_loocv(&features, &"posXY".parse().expect("spec"), cfg).expect("posXY");
    let xyz = run_sd_loocv(&features, &"posXYZ".parse().expect("spec"), cfg).expect("posXYZ");
    let gain = xyz.mean_accuracy - xy.mean_accuracy;
    outcome(
        gain >= 0.05,
        format!(
            "2 depth-only pairs: posXY {:.3}, posXYZ {:.3}, gain {:+.1} points",
            xy.mean_accuracy,
            xyz.mean_accuracy,
            100.0 * gain
        ),
    )
}

fn dimensions(features: &Corpus) -> Outcome {
    let expected = [("pos,S", 26), ("pos,HOG", 84), ("pos,S,HOG", 98)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, dim) in expected {
        let spec: FeatureSetSpec = name.parse().expect("spec");
        let selected = features.samples[0].select(&spec).expect("select");
        let got = selected.frames[0].len();
        pass &= spec.dim() == dim && got == dim;
        parts.push(format!("({name}) = {got}"));
    }
    outcome(pass, parts.join(", "))
}

fn without_runtime(mut r: EvalReport) -> EvalReport {
    r.runtime_seconds = 0.0;
    r
}

fn determinism(cfg: &Config) -> Outcome {
    let spec = SynthSpec {
        classes: 3,
        signers: 2,
        samples_per_signer: 2,
        ..SynthSpec::default()
    };
    let a = SyntheticCorpus::new(spec.clone(), 99).expect("corpus");
    let b = SyntheticCorpus::new(spec, 99).expect("corpus");
    let renders_equal = (0..a.len()).step_by(3).all(|i| {
        let (x, y) = (a.render(i), b.render(i));
        x.sequence == y.sequence && x.truth == y.truth
    });

    let pool = |n: usize| rayon::ThreadPoolBuilder::new().num_threads(n).build().expect("pool");
    let run = |threads: usize| {
        pool(threads).install(|| {
            let features = extract_synthetic(&a, cfg, None).expect("extraction");
            let spec: FeatureSetSpec = "pos,S".parse().expect("spec");
            let sd = run_sd_loocv(&features, &spec, cfg).expect("sd");
            let si = run_si_loso(&features, &spec, 4, cfg).expect("si");
            (features, sd, si)
        })
    };
    let (f1, sd1, si1) = run(1);
    let (f4, sd4, si4) = run(4);
    let features_equal = f1 == f4;
    let reports_equal = without_runtime(sd1.clone()) == without_runtime(sd4) && without_runtime(si1.clone()) == without_runtime(si4);

    let dirs = (tempfile::tempdir().expect("tmp"), tempfile::tempdir().expect("tmp"));
    emit_report(&si1, dirs.0.path()).expect("emit");
    emit_report(&si1, dirs.1.path()).expect("emit");
    let files_equal = ["report.csv", "confusion.csv", "confusion.svg", "config.txt", "report.json"]
        .iter()
        .all(|n| std::fs::read(dirs.0.path().join(n)).ok() == std::fs::read(dirs.1.path().join(n)).ok());
    outcome(
        renders_equal && features_equal && reports_equal && files_equal,
        format!("renders {renders_equal}, features 1 vs 4 threads {features_equal}, SD/SI reports {reports_equal}, emitted files {files_equal}"),
    )
}

#[test]
fn acceptance() {
    let cfg = Config::default();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("hmm forward vs path enumeration", hmm_oracle()),
        ("dtw vs path enumeration", dtw_oracle()),
        ("baum-welch monotonicity", em_monotone()),
        ("lda correctness", lda_correctness()),
        ("descriptor invariances", descriptor_invariances()),
    ];

    let corpus = SyntheticCorpus::new(SynthSpec::default(), CORPUS_SEED).expect("corpus");
    results.push(("segmentation gate", segmentation_gate(&corpus, &cfg)));
    let start = Instant::now();
    let features = extract_synthetic(&corpus, &cfg, None).expect("extraction");
    let extract_secs = start.elapsed().as_secs_f64();
    results.push(("signer-dependent gate", sd_gate(&features, extract_secs, &cfg)));
    results.push(("signer-independent lda gate", si_gate(&features, extract_secs, &cfg)));
    results.push(("depth feature gate", depth_gate(&cfg)));
    results.push(("dimension bookkeeping", dimensions(&features)));
    results.push(("determinism", determinism(&cfg)));

    let mut failed = Vec::new();
    for (k, (name, o)) in results.iter().enumerate() {
        println!("[{}] {:>2}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, k + 1, o.detail);
        if !o.pass {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
