use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use signrec::dataio::{load_sequence, SynthSpec, SyntheticCorpus};
use signrec::eval::{emit_report, extract_manifest, extract_synthetic, fit_fold, run_sd_loocv, run_si_loso, Corpus, EvalReport};
use signrec::features::{FeatureSample, FeatureSetSpec};
use signrec::pipeline::{general_skin_model, track_sequence};
use signrec::{Config, Error, Result};

#[derive(Parser)]
#[command(name = "signrec", version, about = "Isolated sign recognition from RGB-D recordings")]
struct Cli {
    /// key=value configuration file; unspecified keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 4)]
    signers: usize,
    #[arg(long, default_value_t = 6)]
    samples: usize,
    #[arg(long, default_value_t = 1.0)]
    style: f64,
    #[arg(long, default_value_t = 0)]
    depth_pairs: usize,
}

impl SynthArgs {
    fn spec(&self) -> SynthSpec {
        SynthSpec {
            classes: self.classes,
            signers: self.signers,
            samples_per_signer: self.samples,
            style_strength: self.style,
            depth_only_pairs: self.depth_pairs,
            ..SynthSpec::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic corpus (sequences, manifest and ground truth).
    Synth(SynthArgs),
    /// Segment and track one recording; writes hand label images and track.csv.
    Segment {
        #[arg(long)]
        input: PathBuf,
    },
    /// Extract full-layout features for a manifest or a synthetic corpus.
    Extract {
        /// manifest.tsv of a recorded corpus; omitted means synthetic.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        synth: SynthArgs,
        /// Directory for cached per-sample features.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Train a classifier bank on every sample of an extracted corpus.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value = "pos,S,HOG")]
        set: FeatureSetSpec,
        /// LDA output dimension; 0 disables the transform.
        #[arg(long, default_value_t = 0)]
        lda: usize,
    },
    /// Signer-dependent leave-one-repetition-out evaluation.
    EvalSd {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value = "pos,S,HOG")]
        set: FeatureSetSpec,
    },
    /// Signer-independent leave-one-signer-out evaluation.
    EvalSi {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value = "pos,S,HOG")]
        set: FeatureSetSpec,
        #[arg(long, default_value_t = 0)]
        lda: usize,
    },
    /// Re-emit the report files from a saved report.json.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn segment(input: &Path, out: &Path, cfg: &Config) -> Result<()> {
    let seq = load_sequence(input)?;
    let general = general_skin_model(cfg.segmentation.bins);
    let trace = track_sequence(&seq, &general, cfg, true)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut csv = String::from("frame,hand,x,y,vx,vy,area,depth,occlusion,missing\n");
    for (t, f) in trace.frames.iter().enumerate() {
        if let Some(d) = &f.debug {
            signrec::image::write_pgm8(&out.join(format!("hands_{t:06}.pgm")), &d.hands.to_gray())?;
        }
        for (h, name) in ["right", "left"].iter().enumerate() {
            let hf = &f.hands[h];
            let o = &hf.observation;
            let _ = writeln!(
                csv,
                "{t},{name},{:.3},{:.3},{:.3},{:.3},{},{:.1},{:?},{}",
                hf.position.0,
                hf.position.1,
                hf.velocity.0,
                hf.velocity.1,
                o.mask.area(),
                o.depth,
                o.occlusion,
                o.missing
            );
        }
    }
    let path = out.join("track.csv");
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))
}

fn train(features: &Path, set: &FeatureSetSpec, lda_dims: usize, out: &Path, cfg: &Config) -> Result<()> {
    let corpus = Corpus::load(features)?;
    let all: Vec<&FeatureSample> = corpus.samples.iter().collect();
    fit_fold(&all, &corpus.vocabulary, set, lda_dims, cfg)?.bank.save(out)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Synth(args) => SyntheticCorpus::new(args.spec(), cli.seed)?.write_to(out),
        Command::Segment { input } => segment(&input, out, &cfg),
        Command::Extract { manifest, synth, cache } => {
            let corpus = match manifest {
                Some(m) => extract_manifest(&m, &cfg, cache.as_deref())?,
                None => extract_synthetic(&SyntheticCorpus::new(synth.spec(), cli.seed)?, &cfg, cache.as_deref())?,
            };
            corpus.save(out)
        }
        Command::Train { features, set, lda } => train(&features, &set, lda, out, &cfg),
        Command::EvalSd { features, set } => {
            let report = run_sd_loocv(&Corpus::load(&features)?, &set, &cfg)?;
            println!("{} {}: mean accuracy {:.4}", report.protocol, report.feature_set, report.mean_accuracy);
            emit_report(&report, out)
        }
        Command::EvalSi { features, set, lda } => {
            let report = run_si_loso(&Corpus::load(&features)?, &set, lda, &cfg)?;
            println!("{} {} lda={}: mean accuracy {:.4}", report.protocol, report.feature_set, lda, report.mean_accuracy);
            emit_report(&report, out)
        }
        Command::Report { input } => emit_report(&EvalReport::load(&input)?, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match &e {
                Error::Io { .. } => "io",
                Error::Format { .. } => "format",
                Error::LengthMismatch { .. } => "length_mismatch",
                Error::DimensionMismatch { .. } => "dimension_mismatch",
                Error::InvalidInput(_) => "invalid_input",
                Error::Singular(_) => "singular",
                Error::Config(_) => "config",
            };
            eprintln!("error\t{kind}\t{}", e.to_string().replace(['\n', '\t'], " "));
            ExitCode::FAILURE
        }
    }
}
