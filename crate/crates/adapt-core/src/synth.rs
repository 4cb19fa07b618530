//! Generated waveform corpora for end-to-end runs and tests.
//!
//! Four "datasets" of deliberately mismatched shapes (lengths 50-500,
//! channels 1-4) share one binary classification task: sine mixtures
//! (class 0) versus sawtooth mixtures (class 1). The spectra differ enough
//! that a small model separates them after a short fine-tune, which makes
//! the corpus a quick full-pipeline exercise.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng;

use crate::data::{write_samples, DatasetManifest, ManifestEntry, RawSample, Split};
use crate::error::Result;
use crate::rng::{derive2, stream, Stream};

#[derive(Debug, Clone, Copy)]
pub struct SynthOptions {
    /// Samples per dataset, split 70/10/20 into train/val/test.
    pub samples_per_dataset: usize,
    pub seed: u64,
    /// Additive observation noise.
    pub noise: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self { samples_per_dataset: 50, seed: 7, noise: 0.05 }
    }
}

/// (id, length, channels) of the four generated datasets.
pub const DATASET_SHAPES: [(&str, usize, usize); 4] =
    [("waves-a", 50, 1), ("waves-b", 120, 2), ("waves-c", 300, 3), ("waves-d", 500, 4)];

fn sawtooth(u: f64) -> f64 {
    2.0 * (u - (u + 0.5).floor())
}

fn make_sample(
    dataset_idx: usize,
    sample_idx: usize,
    len: usize,
    channels: usize,
    opts: &SynthOptions,
    id: &str,
) -> RawSample {
    let label = (sample_idx % 2) as u32;
    let seed = derive2(opts.seed, dataset_idx as u64, sample_idx as u64);
    let mut rng = stream(seed, Stream::Synth);
    let mut values = Array2::zeros((len, channels));
    // One waveform frequency per sample, shared across channels (channels
    // observe the same phenomenon at different phases). The mixture partner
    // sits at a non-integer multiple of the base so a sine pair never
    // imitates the harmonic comb of a sawtooth.
    let f1: f64 = rng.random_range(3.0..6.0);
    let f2: f64 = 2.5 * f1;
    let (a1, a2) = (1.0, 0.4);
    for c in 0..channels {
        let phase1: f64 = rng.random_range(0.0..TAU);
        let phase2: f64 = rng.random_range(0.0..TAU);
        for t in 0..len {
            let u = t as f64 / len as f64;
            let clean = if label == 0 {
                a1 * (TAU * f1 * u + phase1).sin() + a2 * (TAU * f2 * u + phase2).sin()
            } else {
                a1 * sawtooth(f1 * u + phase1 / TAU) + a2 * sawtooth(f2 * u + phase2 / TAU)
            };
            values[(t, c)] = clean + rng.random_range(-opts.noise..opts.noise);
        }
    }
    RawSample { values, label: Some(label), dataset_id: id.to_string() }
}

/// Write the corpus into `dir` (binary files plus `manifest.toml`) and
/// return the manifest path.
pub fn generate_corpus(dir: &Path, opts: &SynthOptions) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for (dataset_idx, (id, len, channels)) in DATASET_SHAPES.iter().enumerate() {
        let samples: Vec<RawSample> = (0..opts.samples_per_dataset)
            .map(|i| make_sample(dataset_idx, i, *len, *channels, opts, id))
            .collect();
        let n = samples.len();
        let train_end = n * 7 / 10;
        let val_end = n * 8 / 10;
        for (split, range) in [
            (Split::Train, 0..train_end),
            (Split::Val, train_end..val_end),
            (Split::Test, val_end..n),
        ] {
            let file = format!("{id}_{split}.adts");
            write_samples(&dir.join(&file), &samples[range])?;
            entries.push(ManifestEntry {
                id: id.to_string(),
                split,
                path: PathBuf::from(file),
                classes: Some(2),
            });
        }
    }
    let manifest = DatasetManifest::from_entries(entries, dir.to_path_buf())?;
    let manifest_path = dir.join("manifest.toml");
    manifest.save(&manifest_path)?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DatasetManifest;

    #[test]
    fn corpus_has_expected_shape_and_splits() {
        let dir = tempfile::tempdir().unwrap();
        let opts = SynthOptions::default();
        let manifest_path = generate_corpus(dir.path(), &opts).unwrap();
        let manifest = DatasetManifest::load(&manifest_path).unwrap();
        assert_eq!(manifest.entries.len(), 12);

        let mut total = 0;
        for entry in &manifest.entries {
            let samples =
                crate::data::load_dataset(&manifest.resolve_path(entry), entry).unwrap();
            total += samples.len();
            let expected = DATASET_SHAPES.iter().find(|(id, _, _)| *id == entry.id).unwrap();
            for s in &samples {
                assert_eq!(s.values.nrows(), expected.1);
                assert_eq!(s.values.ncols(), expected.2);
                assert!(s.label.unwrap() < 2);
            }
        }
        assert_eq!(total, 200);
    }

    #[test]
    fn generation_is_deterministic() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let opts = SynthOptions::default();
        generate_corpus(dir_a.path(), &opts).unwrap();
        generate_corpus(dir_b.path(), &opts).unwrap();
        for (id, _, _) in DATASET_SHAPES {
            let a = std::fs::read(dir_a.path().join(format!("{id}_train.adts"))).unwrap();
            let b = std::fs::read(dir_b.path().join(format!("{id}_train.adts"))).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn classes_are_balanced() {
        let dir = tempfile::tempdir().unwrap();
        let manifest_path = generate_corpus(dir.path(), &SynthOptions::default()).unwrap();
        let manifest = DatasetManifest::load(&manifest_path).unwrap();
        let mut counts = [0usize; 2];
        for entry in &manifest.entries {
            for s in crate::data::load_dataset(&manifest.resolve_path(entry), entry).unwrap() {
                counts[s.label.unwrap() as usize] += 1;
            }
        }
        assert_eq!(counts[0], 100);
        assert_eq!(counts[1], 100);
    }
}
