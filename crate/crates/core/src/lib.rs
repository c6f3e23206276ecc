//! Isolated sign recognition from RGB-D recordings.
//!
//! The pipeline runs in stages that map onto the modules below:
//!
//! * [`dataio`] loads and saves recordings, mirrors left-handed signers and
//!   renders a synthetic signing corpus with ground truth.
//! * [`segmentation`] finds hand blobs with adaptive skin histograms, a motion
//!   mask, morphology, ranked assignment and depth-based occlusion handling.
//! * [`tracking`] keeps two Kalman filters per hand (motion and bounding box).
//! * [`pipeline`] drives segmentation and tracking over a whole sequence.
//! * [`features`] turns hand observations into the positional and shape
//!   descriptor blocks and assembles per-frame feature vectors.
//! * [`signerlda`] learns a signer-independent projection from DTW-aligned
//!   samples with multi-class Fisher LDA.
//! * [`hmm`] trains left-to-right HMMs and classifies by log-likelihood.
//! * [`eval`] runs the signer-dependent and signer-independent protocols and
//!   writes reports.

pub mod config;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod features;
pub mod hmm;
pub mod image;
pub mod pipeline;
pub mod segmentation;
pub mod signerlda;
pub mod tracking;

pub use config::Config;
pub use error::{Error, Result};
