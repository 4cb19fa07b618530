//! Mixed-dataset sample store and epoch iteration.
//!
//! All datasets are ingested and aligned once into one pooled store
//! (alignment is deterministic, so it is cached); augmentation is re-sampled
//! every epoch at extraction time. Batch composition is fully determined by
//! `(seed, epoch)`.

use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::align::{align_sample, AlignOptions, AlignedSample};
use crate::augment::Augmenter;
use crate::data::{ingest, DatasetManifest, NormalizationScope, Split};
use crate::error::{Error, Result};
use crate::rng::{derive, derive2, stream, Stream};

/// Aligned samples from every dataset of one split, pooled together.
#[derive(Debug, Clone)]
pub struct SampleStore {
    pub samples: Vec<AlignedSample>,
    /// Distinct dataset ids, in manifest order.
    pub dataset_ids: Vec<String>,
    /// Per-dataset sample indices (parallel to `dataset_ids`).
    per_dataset: Vec<Vec<usize>>,
}

impl SampleStore {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn from_samples(samples: Vec<AlignedSample>) -> Self {
        let mut dataset_ids: Vec<String> = Vec::new();
        let mut per_dataset: Vec<Vec<usize>> = Vec::new();
        for (idx, s) in samples.iter().enumerate() {
            match dataset_ids.iter().position(|id| *id == s.dataset_id) {
                Some(d) => per_dataset[d].push(idx),
                None => {
                    dataset_ids.push(s.dataset_id.clone());
                    per_dataset.push(vec![idx]);
                }
            }
        }
        Self { samples, dataset_ids, per_dataset }
    }
}

/// Ingest, normalize, and align every dataset of `split` into one store.
pub fn build_training_set(
    manifest: &DatasetManifest,
    split: Split,
    scope: NormalizationScope,
    align: &AlignOptions,
) -> Result<SampleStore> {
    align.validate()?;
    let entries: Vec<_> = manifest.entries_for(split).collect();
    if entries.is_empty() {
        return Err(Error::validation(format!("manifest has no {split} entries")));
    }
    let mut samples = Vec::new();
    for entry in entries {
        let raw = ingest(manifest, entry, scope)
            .map_err(|e| Error::validation(format!("dataset {}: {e}", entry.id)))?;
        for sample in &raw {
            samples.push(align_sample(sample, align)?);
        }
    }
    Ok(SampleStore::from_samples(samples))
}

/// One training batch: augmented inputs, clean targets, mask index sets,
/// labels, and provenance. Tensors are `(batch, l_out, c_out)`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub input_time: Array3<f64>,
    pub input_freq: Array3<f64>,
    pub target_time: Array3<f64>,
    pub target_freq: Array3<f64>,
    pub q_time: Vec<Vec<usize>>,
    pub q_freq: Vec<Vec<usize>>,
    pub labels: Vec<Option<u32>>,
    pub dataset_ids: Vec<String>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// How samples are drawn each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Uniform permutation of the pooled store; every sample appears exactly
    /// once per epoch.
    Proportional,
    /// Dataset-balanced: draw a dataset uniformly, then a member uniformly
    /// (with replacement). Epoch length equals the store size.
    Balanced,
}

/// The sample indices visited in one epoch.
fn epoch_order(store: &SampleStore, epoch_seed: u64, mode: SamplingMode) -> Vec<usize> {
    let mut rng = stream(epoch_seed, Stream::Shuffle);
    match mode {
        SamplingMode::Proportional => {
            let mut order: Vec<usize> = (0..store.len()).collect();
            order.shuffle(&mut rng);
            order
        }
        SamplingMode::Balanced => (0..store.len())
            .map(|_| {
                let d = rng.random_range(0..store.per_dataset.len());
                let members = &store.per_dataset[d];
                members[rng.random_range(0..members.len())]
            })
            .collect(),
    }
}

const SAMPLE_TAG: u64 = 0x5A11;

/// The (seed, epoch)-determined visitation order for one epoch.
#[derive(Debug, Clone)]
pub struct EpochPlan {
    pub epoch_seed: u64,
    pub order: Vec<usize>,
}

impl EpochPlan {
    pub fn new(store: &SampleStore, seed: u64, epoch: u64, mode: SamplingMode) -> Self {
        assert!(!store.is_empty(), "epoch plan: empty store");
        let epoch_seed = derive2(seed, Stream::Epoch as u64, epoch);
        let order = epoch_order(store, epoch_seed, mode);
        Self { epoch_seed, order }
    }

    pub fn chunks(&self, batch_size: usize) -> impl Iterator<Item = &[usize]> {
        assert!(batch_size >= 1, "batch_size must be >= 1");
        self.order.chunks(batch_size)
    }
}

/// Augment and stack the samples at `indices`. The result depends only on
/// `(epoch_seed, indices, augmenter)`: each sample's randomness is seeded by
/// its store index, so `threads` changes wall time, never content.
pub fn assemble_batch(
    store: &SampleStore,
    augmenter: &Augmenter,
    epoch_seed: u64,
    indices: &[usize],
    threads: usize,
) -> Batch {
    assert!(!indices.is_empty(), "assemble_batch: empty index list");
    let augment_one = |&idx: &usize| {
        let sample_seed = derive(epoch_seed, SAMPLE_TAG ^ (idx as u64));
        augmenter.augment(&store.samples[idx], sample_seed)
    };
    let pairs: Vec<crate::augment::MaskedPair> = if threads > 1 && indices.len() > 1 {
        let chunk = indices.len().div_ceil(threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = indices
                .chunks(chunk)
                .map(|part| scope.spawn(move || part.iter().map(augment_one).collect::<Vec<_>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("augment worker")).collect()
        })
    } else {
        indices.iter().map(augment_one).collect()
    };
    stack_batch(&pairs)
}

/// Iterate one epoch of batches. Augmentation for sample `i` is seeded by
/// `(seed, epoch, i)`, so batch contents are reproducible and independent of
/// how many worker threads assemble them.
pub fn iterate_epoch<'a>(
    store: &'a SampleStore,
    augmenter: &'a Augmenter,
    seed: u64,
    epoch: u64,
    batch_size: usize,
    mode: SamplingMode,
) -> impl Iterator<Item = Batch> + 'a {
    assert!(batch_size >= 1, "batch_size must be >= 1");
    let plan = EpochPlan::new(store, seed, epoch, mode);
    let n = plan.order.len();
    let mut start = 0usize;
    std::iter::from_fn(move || {
        if start >= n {
            return None;
        }
        let end = (start + batch_size).min(n);
        let batch = assemble_batch(store, augmenter, plan.epoch_seed, &plan.order[start..end], 1);
        start = end;
        Some(batch)
    })
}

fn stack_batch(pairs: &[crate::augment::MaskedPair]) -> Batch {
    let b = pairs.len();
    let (l, c) = pairs[0].input_time.dim();
    let mut input_time = Array3::zeros((b, l, c));
    let mut input_freq = Array3::zeros((b, l, c));
    let mut target_time = Array3::zeros((b, l, c));
    let mut target_freq = Array3::zeros((b, l, c));
    let mut q_time = Vec::with_capacity(b);
    let mut q_freq = Vec::with_capacity(b);
    let mut labels = Vec::with_capacity(b);
    let mut dataset_ids = Vec::with_capacity(b);
    for (i, pair) in pairs.iter().enumerate() {
        assert_eq!(pair.input_time.dim(), (l, c), "ragged batch");
        input_time.index_axis_mut(ndarray::Axis(0), i).assign(&pair.input_time);
        input_freq.index_axis_mut(ndarray::Axis(0), i).assign(&pair.input_freq);
        target_time.index_axis_mut(ndarray::Axis(0), i).assign(&pair.target_time);
        target_freq.index_axis_mut(ndarray::Axis(0), i).assign(&pair.target_freq);
        q_time.push(pair.q_time.masked.clone());
        q_freq.push(pair.q_freq.masked.clone());
        labels.push(pair.label);
        dataset_ids.push(pair.dataset_id.clone());
    }
    Batch { input_time, input_freq, target_time, target_freq, q_time, q_freq, labels, dataset_ids }
}

/// Stack aligned samples without augmentation (fine-tuning and evaluation):
/// inputs equal targets and the mask sets are empty.
pub fn stack_clean(samples: &[&AlignedSample]) -> Batch {
    let b = samples.len();
    assert!(b >= 1, "stack_clean: empty batch");
    let (l, c) = samples[0].time_repr.dim();
    let mut input_time = Array3::zeros((b, l, c));
    let mut input_freq = Array3::zeros((b, l, c));
    let mut labels = Vec::with_capacity(b);
    let mut dataset_ids = Vec::with_capacity(b);
    for (i, s) in samples.iter().enumerate() {
        assert_eq!(s.time_repr.dim(), (l, c), "ragged batch");
        input_time.index_axis_mut(ndarray::Axis(0), i).assign(&s.time_repr);
        input_freq.index_axis_mut(ndarray::Axis(0), i).assign(&s.freq_repr);
        labels.push(s.label);
        dataset_ids.push(s.dataset_id.clone());
    }
    Batch {
        target_time: input_time.clone(),
        target_freq: input_freq.clone(),
        input_time,
        input_freq,
        q_time: vec![Vec::new(); b],
        q_freq: vec![Vec::new(); b],
        labels,
        dataset_ids,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{NoiseConfig, SpanMaskConfig, TargetKind};
    use ndarray::Array2;

    fn store_with(sizes: &[(usize, &str)]) -> SampleStore {
        let mut samples = Vec::new();
        for &(count, id) in sizes {
            for k in 0..count {
                samples.push(AlignedSample {
                    time_repr: Array2::from_elem((16, 2), k as f64),
                    freq_repr: Array2::from_elem((16, 2), k as f64 + 0.5),
                    label: Some((k % 2) as u32),
                    dataset_id: id.to_string(),
                });
            }
        }
        SampleStore::from_samples(samples)
    }

    fn augmenter() -> Augmenter {
        Augmenter {
            noise: NoiseConfig::default(),
            mask: SpanMaskConfig::default(),
            noise_enabled: true,
            targets: TargetKind::Clean,
        }
    }

    #[test]
    fn batch_sizes_follow_arithmetic() {
        let store = store_with(&[(25, "a")]);
        let sizes: Vec<usize> =
            iterate_epoch(&store, &augmenter(), 1, 0, 8, SamplingMode::Proportional)
                .map(|b| b.len())
                .collect();
        assert_eq!(sizes, vec![8, 8, 8, 1]);
    }

    #[test]
    fn epoch_covers_every_sample_exactly_once() {
        let store = store_with(&[(10, "a"), (15, "b")]);
        // (dataset_id, within-dataset index) identifies a sample; the index
        // is recoverable from the constant target fill.
        let mut seen: std::collections::BTreeMap<(String, usize), usize> =
            std::collections::BTreeMap::new();
        for batch in iterate_epoch(&store, &augmenter(), 3, 2, 4, SamplingMode::Proportional) {
            for (i, target) in batch.target_time.outer_iter().enumerate() {
                let k = target[(0, 0)].round() as usize;
                *seen.entry((batch.dataset_ids[i].clone(), k)).or_insert(0) += 1;
            }
        }
        assert_eq!(seen.len(), 25);
        assert!(seen.values().all(|&count| count == 1));
        assert_eq!(seen.keys().filter(|(id, _)| id == "a").count(), 10);
        assert_eq!(seen.keys().filter(|(id, _)| id == "b").count(), 15);
    }

    #[test]
    fn different_epochs_use_different_permutations() {
        let store = store_with(&[(40, "a")]);
        let order_of = |epoch: u64| -> Vec<f64> {
            iterate_epoch(&store, &augmenter(), 5, epoch, 40, SamplingMode::Proportional)
                .flat_map(|b| {
                    b.target_time.outer_iter().map(|t| t[(0, 0)]).collect::<Vec<_>>()
                })
                .collect()
        };
        assert_ne!(order_of(0), order_of(1));
    }

    #[test]
    fn same_seed_and_epoch_reproduce_batches_exactly() {
        let store = store_with(&[(12, "a"), (5, "b")]);
        let collect = || -> Vec<Batch> {
            iterate_epoch(&store, &augmenter(), 7, 3, 6, SamplingMode::Proportional).collect()
        };
        let xs = collect();
        let ys = collect();
        assert_eq!(xs.len(), ys.len());
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(x.input_time, y.input_time);
            assert_eq!(x.input_freq, y.input_freq);
            assert_eq!(x.q_time, y.q_time);
            assert_eq!(x.labels, y.labels);
            assert_eq!(x.dataset_ids, y.dataset_ids);
        }
    }

    #[test]
    fn full_store_batch_mixes_datasets() {
        let store = store_with(&[(10, "a"), (10, "b"), (10, "c")]);
        let batch =
            iterate_epoch(&store, &augmenter(), 11, 0, 30, SamplingMode::Proportional)
                .next()
                .unwrap();
        let distinct: std::collections::BTreeSet<&String> = batch.dataset_ids.iter().collect();
        assert_eq!(distinct.len(), 3);
    }

    #[test]
    fn some_batch_mixes_datasets_under_shuffling() {
        let store = store_with(&[(20, "a"), (20, "b")]);
        for seed in 0..20u64 {
            let mixed = iterate_epoch(&store, &augmenter(), seed, 0, 8, SamplingMode::Proportional)
                .any(|b| {
                    let distinct: std::collections::BTreeSet<&String> =
                        b.dataset_ids.iter().collect();
                    distinct.len() >= 2
                });
            assert!(mixed, "seed {seed}: no mixed batch in the whole epoch");
        }
    }

    #[test]
    fn balanced_mode_evens_out_skewed_stores() {
        let store = store_with(&[(90, "big"), (10, "small")]);
        let mut counts = std::collections::BTreeMap::new();
        for epoch in 0..20 {
            for batch in iterate_epoch(&store, &augmenter(), 13, epoch, 25, SamplingMode::Balanced)
            {
                for id in &batch.dataset_ids {
                    *counts.entry(id.clone()).or_insert(0usize) += 1;
                }
            }
        }
        let big = counts["big"] as f64;
        let small = counts["small"] as f64;
        let frac = small / (big + small);
        assert!((frac - 0.5).abs() < 0.05, "balanced fraction {frac}");
    }

    #[test]
    fn worker_threads_do_not_change_batch_content() {
        let store = store_with(&[(9, "a")]);
        let plan = EpochPlan::new(&store, 21, 4, SamplingMode::Proportional);
        let indices: Vec<usize> = plan.order[..9].to_vec();
        let one = assemble_batch(&store, &augmenter(), plan.epoch_seed, &indices, 1);
        let four = assemble_batch(&store, &augmenter(), plan.epoch_seed, &indices, 4);
        assert_eq!(one.input_time, four.input_time);
        assert_eq!(one.input_freq, four.input_freq);
        assert_eq!(one.q_time, four.q_time);
        assert_eq!(one.labels, four.labels);
    }

    #[test]
    fn missing_split_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let manifest_path = dir.path().join("manifest.toml");
        let data_path = dir.path().join("x.adts");
        crate::data::write_samples(
            &data_path,
            &[crate::data::RawSample {
                values: Array2::from_elem((4, 1), 1.0),
                label: None,
                dataset_id: "x".into(),
            }],
        )
        .unwrap();
        std::fs::write(
            &manifest_path,
            "[[dataset]]\nid = \"x\"\nsplit = \"test\"\npath = \"x.adts\"\n",
        )
        .unwrap();
        let manifest = DatasetManifest::load(&manifest_path).unwrap();
        let err = build_training_set(
            &manifest,
            Split::Train,
            NormalizationScope::PerSample,
            &AlignOptions::default(),
        );
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn ingest_error_names_the_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let manifest_path = dir.path().join("manifest.toml");
        std::fs::write(
            &manifest_path,
            "[[dataset]]\nid = \"ghost\"\nsplit = \"train\"\npath = \"missing.adts\"\n",
        )
        .unwrap();
        let manifest = DatasetManifest::load(&manifest_path).unwrap();
        let err = build_training_set(
            &manifest,
            Split::Train,
            NormalizationScope::PerSample,
            &AlignOptions::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("ghost"), "error should name the dataset: {err}");
    }

    #[test]
    fn heterogeneous_shapes_coexist_in_one_store() {
        let dir = tempfile::tempdir().unwrap();
        let manifest_path = dir.path().join("manifest.toml");
        for (name, len, ch) in [("har.adts", 128usize, 9usize), ("fd.adts", 5120, 1)] {
            crate::data::write_samples(
                &dir.path().join(name),
                &[crate::data::RawSample {
                    values: Array2::from_shape_fn((len, ch), |(t, c)| (t + c) as f64),
                    label: None,
                    dataset_id: name.to_string(),
                }],
            )
            .unwrap();
        }
        std::fs::write(
            &manifest_path,
            "[[dataset]]\nid = \"har\"\nsplit = \"train\"\npath = \"har.adts\"\n\n\
             [[dataset]]\nid = \"fd\"\nsplit = \"train\"\npath = \"fd.adts\"\n",
        )
        .unwrap();
        let manifest = DatasetManifest::load(&manifest_path).unwrap();
        let store = build_training_set(
            &manifest,
            Split::Train,
            NormalizationScope::PerSample,
            &AlignOptions::default(),
        )
        .unwrap();
        assert_eq!(store.len(), 2);
        let batch = iterate_epoch(&store, &augmenter(), 1, 0, 2, SamplingMode::Proportional)
            .next()
            .unwrap();
        assert_eq!(batch.input_time.dim(), (2, 256, 32));
        let distinct: std::collections::BTreeSet<&String> = batch.dataset_ids.iter().collect();
        assert_eq!(distinct.len(), 2);
    }
}
