//! Weakly supervised segmentation of robot kinematic trajectories into
//! gesture classes with a Gaussian mixture over window-augmented states.
//!
//! The pipeline: [`ingest`] reads recordings and transcripts, [`preprocess`]
//! builds the kinematic feature vector and the augmented states, [`gmm`]
//! seeds a mixture from a few annotated demonstrations and refines it with
//! EM, and [`metrics`] scores the result. [`dictionary`] relabels transcripts
//! and [`synth`] produces labelled data from a switched linear system.

pub mod dictionary;
pub mod error;
pub mod gmm;
pub mod ingest;
pub mod metrics;
pub mod preprocess;
pub mod synth;

pub use error::{Error, Result};
