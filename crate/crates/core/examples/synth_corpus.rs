//! Renders a small synthetic corpus to disk: a manifest plus colour, depth,
//! skeleton and ground-truth files for every recording.
//!
//! ```text
//! cargo run --release --example synth_corpus -- /tmp/corpus
//! ```

use std::path::PathBuf;

use signrec::dataio::{DatasetManifest, SynthSpec, SyntheticCorpus};

fn main() -> signrec::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synthetic_corpus".into()));
    let spec = SynthSpec {
        classes: 5,
        signers: 2,
        samples_per_signer: 2,
        left_handed_signers: 1,
        depth_only_pairs: 1,
        ..SynthSpec::default()
    };
    let corpus = SyntheticCorpus::new(spec, 11)?;
    corpus.write_to(&dir)?;

    let manifest = DatasetManifest::load(&dir.join("manifest.tsv"))?;
    println!("{} recordings over {} signs in {}", manifest.entries.len(), manifest.vocabulary.len(), dir.display());
    for e in manifest.entries.iter().take(6) {
        println!("  {:<16} signer {} {:<8} {}", e.path.display(), e.signer, e.label, e.handedness);
    }
    Ok(())
}
