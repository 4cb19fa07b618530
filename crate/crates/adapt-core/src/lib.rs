//! Many-to-one pretraining for time-series classification.
//!
//! Heterogeneous datasets (arbitrary length and channel count per sample) are
//! aligned to one fixed-shape dual representation — pooled time values plus a
//! pooled magnitude spectrum — via adaptive average pooling with dynamically
//! computed kernels. Aligned samples are augmented with Gaussian noise and
//! geometric span masking in both domains, batched across datasets, and used
//! to pretrain a small transformer encoder under a masked dual-domain
//! reconstruction loss. A classifier head is then fine-tuned per task.
//!
//! Module map:
//! - [`data`]: binary sample files, manifests, per-channel normalization
//! - [`align`]: dynamic-kernel pooling and the magnitude spectrum
//! - [`augment`]: noise and span masking, mask plans
//! - [`batch`]: mixed-dataset sample store and epoch iteration
//! - [`model`]: transformer encoder with exact analytic gradients
//! - [`train`]: optimizer, schedule, pretraining and fine-tuning loops
//! - [`eval`]: classification metrics, embedding export, correlations
//! - [`synth`]: generated waveform corpora for end-to-end smoke runs

pub mod align;
pub mod augment;
pub mod batch;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod rng;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
