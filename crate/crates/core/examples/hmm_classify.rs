//! Trains one left-to-right HMM per class on noisy 2-D strokes, saves the
//! bank, reloads it and classifies fresh strokes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use signrec::config::HmmConfig;
use signrec::hmm::{classify, ClassifierBank};

fn stroke(rng: &mut ChaCha8Rng, class: usize) -> Vec<Vec<f64>> {
    let len = rng.gen_range(15..25);
    let angle = class as f64 * std::f64::consts::TAU / 5.0;
    (0..len)
        .map(|t| {
            let u = t as f64 / (len - 1) as f64;
            vec![u * angle.cos() + rng.gen_range(-0.1..0.1), u * angle.sin() + rng.gen_range(-0.1..0.1)]
        })
        .collect()
}

fn main() -> signrec::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let train: Vec<Vec<Vec<Vec<f64>>>> = (0..5).map(|c| (0..6).map(|_| stroke(&mut rng, c)).collect()).collect();
    let classes: Vec<(String, Vec<&[Vec<f64>]>)> = train
        .iter()
        .enumerate()
        .map(|(c, s)| (format!("sign{c}"), s.iter().map(Vec::as_slice).collect()))
        .collect();
    let cfg = HmmConfig {
        states: 4,
        ..HmmConfig::default()
    };
    let bank = ClassifierBank::train(&classes, "xy", None, &cfg)?;

    let dir = std::env::temp_dir().join("signrec_hmm_example");
    bank.save(&dir)?;
    let bank = ClassifierBank::load(&dir)?;
    println!("bank with {} models saved to {}", bank.models.len(), dir.display());

    let (_, scores) = classify(&bank, &stroke(&mut rng, 0))?;
    println!("log-likelihoods for a sign0 stroke: {scores:.1?}");

    let mut correct = 0;
    for c in 0..5 {
        for _ in 0..4 {
            let (best, _) = classify(&bank, &stroke(&mut rng, c))?;
            correct += usize::from(best == c);
        }
    }
    println!("{correct}/20 test strokes recognised");
    Ok(())
}
