//! Segments and tracks a few synthetic recordings and compares the hand
//! masks with the rendered ground truth.

use std::time::Instant;

use signrec::dataio::{SynthSpec, SyntheticCorpus};
use signrec::pipeline::{general_skin_model, score_against_truth, track_sequence, SegmentationScore};
use signrec::Config;

fn main() -> signrec::Result<()> {
    let spec = SynthSpec {
        classes: 4,
        signers: 2,
        samples_per_signer: 1,
        ..SynthSpec::default()
    };
    let corpus = SyntheticCorpus::new(spec, 7)?;
    let cfg = Config::default();
    let general = general_skin_model(cfg.segmentation.bins);
    let mut total = SegmentationScore::default();
    for i in 0..corpus.len() {
        let start = Instant::now();
        let sample = corpus.render(i);
        let rendered = start.elapsed();
        let trace = track_sequence(&sample.sequence, &general, &cfg, false)?;
        let score = score_against_truth(&trace, &sample.truth);
        println!(
            "{:<14} frames {:>3}  iou {:.3}  occluded err {:>6.2} (max {:>6.2})  render {:?} track {:?}",
            sample.entry.path.display(),
            sample.sequence.len(),
            score.mean_iou(),
            score.mean_occluded_error(),
            score.max_occluded_error(),
            rendered,
            start.elapsed() - rendered
        );
        total.merge(score);
    }
    println!(
        "overall: iou {:.3} over {} hand-frames, occluded error {:.2} px (max {:.2}) over {}",
        total.mean_iou(),
        total.ious.len(),
        total.mean_occluded_error(),
        total.max_occluded_error(),
        total.occluded_errors.len()
    );
    Ok(())
}
