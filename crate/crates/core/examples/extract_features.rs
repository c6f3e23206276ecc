//! Extracts the full per-frame feature layout from one synthetic recording
//! and prints the width and a summary of every block.

use signrec::dataio::{SynthSpec, SyntheticCorpus};
use signrec::features::{extract_sample, Block, FeatureSetSpec};
use signrec::pipeline::general_skin_model;
use signrec::Config;

fn main() -> signrec::Result<()> {
    let spec = SynthSpec {
        classes: 3,
        signers: 1,
        samples_per_signer: 1,
        ..SynthSpec::default()
    };
    let corpus = SyntheticCorpus::new(spec, 4)?;
    let cfg = Config::default();
    let general = general_skin_model(cfg.segmentation.bins);
    let sample = corpus.render(0);
    let features = extract_sample(&sample.sequence, &general, &cfg)?;
    println!("{} frames of {} features", features.len(), features.dim());

    for block in Block::ALL {
        let set = FeatureSetSpec::new(vec![block])?;
        let sel = features.select(&set)?;
        let mean_abs = sel.frames.iter().flatten().map(|v| v.abs()).sum::<f64>() / (sel.len() * sel.dim()) as f64;
        println!("{:<12} width {:>3}  mean |x| {:.4}", block.name(), sel.dim(), mean_abs);
    }

    let set: FeatureSetSpec = "pos,S,HOG".parse()?;
    let t = features.len() / 2;
    let mid = &features.select(&set)?.frames[t];
    println!("{set} at frame {t}: {:?}", &mid[..6]);
    Ok(())
}
