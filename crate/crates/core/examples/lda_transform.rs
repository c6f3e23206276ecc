//! Fits the signer-independent transform on toy trajectories where each
//! signer draws the same signs shifted and stretched, then projects a
//! sample and prints the eigenvalues.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use signrec::config::LdaConfig;
use signrec::signerlda::{fit, project, AlignInput};

fn stroke(rng: &mut ChaCha8Rng, class: usize, signer: usize) -> Vec<Vec<f64>> {
    let len = rng.gen_range(20..30);
    let angle = class as f64 * 1.3;
    let (shift, stretch) = (0.3 * signer as f64, 1.0 + 0.2 * signer as f64);
    (0..len)
        .map(|t| {
            let u = t as f64 / (len - 1) as f64;
            vec![
                stretch * u * angle.cos() + shift + rng.gen_range(-0.05..0.05),
                stretch * u * angle.sin() + rng.gen_range(-0.05..0.05),
                shift + rng.gen_range(-0.05..0.05),
            ]
        })
        .collect()
}

fn main() -> signrec::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data: Vec<Vec<Vec<Vec<f64>>>> = (0..4)
        .map(|c| (0..3).map(|s| stroke(&mut rng, c, s)).collect())
        .collect();
    let classes: Vec<(String, Vec<AlignInput>)> = data
        .iter()
        .enumerate()
        .map(|(c, samples)| {
            let inputs = samples.iter().map(|f| AlignInput { features: f, keys: f }).collect();
            (format!("sign{c}"), inputs)
        })
        .collect();

    let lda = fit(&classes, 2, &LdaConfig::default(), "toy")?;
    println!("eigenvalues {:?}, shrinkage {}", lda.eigenvalues, lda.gamma);
    println!("W =\n{}", lda.w);

    let projected = project(&data[0][0], &lda)?;
    println!("sign0 first/last projected frame: {:?} {:?}", projected[0], projected[projected.len() - 1]);
    Ok(())
}
