//! The same signs rendered at two resolutions give the same normalised
//! positional features.

use signrec::dataio::{SynthSpec, SyntheticCorpus};
use signrec::features::{extract_sample, Block, FeatureSetSpec};
use signrec::pipeline::general_skin_model;
use signrec::Config;

fn spec(scale: usize) -> SynthSpec {
    SynthSpec {
        classes: 3,
        signers: 1,
        samples_per_signer: 1,
        left_handed_signers: 0,
        width: 320 * scale,
        height: 240 * scale,
        ..SynthSpec::default()
    }
}

#[test]
fn positions_survive_global_rescaling() {
    let cfg = Config::default();
    let general = general_skin_model(cfg.segmentation.bins);
    let small = SyntheticCorpus::new(spec(1), 5).unwrap();
    let large = SyntheticCorpus::new(spec(2), 5).unwrap();
    let pos = FeatureSetSpec::new(vec![Block::PosXYZ]).unwrap();
    for i in 0..small.len() {
        let a = extract_sample(&small.render(i).sequence, &general, &cfg).unwrap().select(&pos).unwrap();
        let b = extract_sample(&large.render(i).sequence, &general, &cfg).unwrap().select(&pos).unwrap();
        assert_eq!(a.frames.len(), b.frames.len());
        for col in 0..pos.dim() {
            let range = a.frames.iter().map(|f| f[col].abs()).fold(0.0, f64::max);
            let worst = a.frames.iter().zip(&b.frames).map(|(x, y)| (x[col] - y[col]).abs()).fold(0.0, f64::max);
            let mean = a.frames.iter().zip(&b.frames).map(|(x, y)| (x[col] - y[col]).abs()).sum::<f64>() / a.frames.len() as f64;
            println!("sample {i} col {col}: range {range:.3} worst {worst:.4} mean {mean:.4}");
            assert!(mean <= 0.02 * range.max(1e-9), "sample {i} column {col}: mean deviation {mean} vs range {range}");
        }
    }
}
