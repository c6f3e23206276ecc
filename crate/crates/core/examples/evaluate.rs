//! Extracts a small synthetic corpus and runs both evaluation protocols,
//! writing the report files for each.
//!
//! ```text
//! cargo run --release --example evaluate -- /tmp/reports
//! ```

use std::path::PathBuf;

use signrec::dataio::{SynthSpec, SyntheticCorpus};
use signrec::eval::{emit_report, extract_synthetic, run_sd_loocv, run_si_loso};
use signrec::features::FeatureSetSpec;
use signrec::Config;

fn main() -> signrec::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "reports".into()));
    let spec = SynthSpec {
        classes: 5,
        signers: 3,
        samples_per_signer: 3,
        ..SynthSpec::default()
    };
    let cfg = Config::default();
    let corpus = extract_synthetic(&SyntheticCorpus::new(spec, 21)?, &cfg, None)?;
    println!("{} samples from signers {:?}", corpus.samples.len(), corpus.signers());

    let set: FeatureSetSpec = "pos,S".parse()?;
    let sd = run_sd_loocv(&corpus, &set, &cfg)?;
    emit_report(&sd, &out.join("sd"))?;
    for lda in [0, 4] {
        let si = run_si_loso(&corpus, &set, lda, &cfg)?;
        println!("{} lda={lda}: {:.3}", si.protocol, si.mean_accuracy);
        emit_report(&si, &out.join(format!("si_lda{lda}")))?;
    }
    println!("{}: {:.3}", sd.protocol, sd.mean_accuracy);
    for s in &sd.signers {
        println!("  {} {:.3} ({}/{})", s.signer, s.accuracy, s.correct, s.total);
    }
    println!("reports in {}", out.display());
    Ok(())
}
