//! Pretraining and fine-tuning loops.
//!
//! Both loops share the same machinery: AdamW with decoupled weight decay,
//! a per-step linear-warmup + cosine-decay schedule, global-norm gradient
//! clipping, JSONL step logs, and best/last checkpointing. Pretraining
//! minimizes the masked dual-domain reconstruction loss over mixed batches;
//! fine-tuning minimizes cross-entropy, either end to end or with everything
//! but the classifier frozen.
//!
//! Reproducibility contract: `(config, seed)` fully determines the run.
//! Training state (parameters and optimizer moments, f64) is saved to a
//! sidecar next to the `last` checkpoint after every epoch, so a resumed run
//! continues the original trajectory bit for bit.

pub mod optimizer;
pub mod schedule;

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use optimizer::{adamw_update, clip_gradients, clip_slices, AdamW, AdamWConfig, Moments};
pub use schedule::lr_at;

use crate::augment::{add_noise, Augmenter, NoiseConfig};
use crate::batch::{
    assemble_batch, build_training_set, stack_clean, Batch, EpochPlan, SampleStore, SamplingMode,
};
use crate::config::ExperimentConfig;
use crate::data::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::eval::{aggregate_seeds, compute_metrics, AggregateReport, MetricsReport};
use crate::model::checkpoint;
use crate::model::loss::{cross_entropy, masked_recon_loss, predictions};
use crate::model::{DropoutCtx, Encoding, Model, ModelParams};
use crate::rng::{derive2, stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Pretrain,
    Finetune,
    /// Fine-tune with every parameter frozen except the classifier.
    FinetuneLc,
}

/// Which tensors receive optimizer updates, aligned with the parameter
/// visitation order. Domain projections and heads outside the configured
/// encoding are frozen; pretraining freezes the classifier; fine-tuning
/// freezes the reconstruction heads; LC fine-tuning trains only the
/// classifier.
pub fn trainable_mask(params: &ModelParams, mode: TrainMode, encoding: Encoding) -> Vec<bool> {
    params
        .visit()
        .iter()
        .map(|(name, _)| {
            let domain_ok = if name.starts_with("proj_t") || name.starts_with("head_t") {
                encoding.uses_time()
            } else if name.starts_with("proj_f") || name.starts_with("head_f") {
                encoding.uses_freq()
            } else {
                true
            };
            let mode_ok = match mode {
                TrainMode::Pretrain => !name.starts_with("classifier"),
                TrainMode::Finetune => !name.starts_with("head_"),
                TrainMode::FinetuneLc => name.starts_with("classifier"),
            };
            domain_ok && mode_ok
        })
        .collect()
}

#[derive(Serialize)]
struct LogRecord {
    epoch: usize,
    step: usize,
    lr: f64,
    loss: f64,
}

/// Line-delimited JSON step log, one record per training step.
struct TrainLog {
    writer: Option<BufWriter<std::fs::File>>,
}

impl TrainLog {
    fn open(dir: Option<&Path>, name: &str) -> Result<Self> {
        let writer = match dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let file =
                    std::fs::OpenOptions::new().create(true).append(true).open(dir.join(name))?;
                Some(BufWriter::new(file))
            }
            None => None,
        };
        Ok(Self { writer })
    }

    fn record(&mut self, epoch: usize, step: usize, lr: f64, loss: f64) {
        if let Some(w) = &mut self.writer {
            let line = serde_json::to_string(&LogRecord { epoch, step, lr, loss })
                .expect("log record serializes");
            let _ = writeln!(w, "{line}");
        }
    }

    fn flush(&mut self) {
        if let Some(w) = &mut self.writer {
            let _ = w.flush();
        }
    }
}

fn dropout_ctx(prob: f64, seed: u64, step: usize) -> Option<DropoutCtx> {
    (prob > 0.0).then(|| DropoutCtx { prob, seed: derive2(seed, 0xD60, step as u64) })
}

/// Iterate one epoch's batches, optionally assembling them on a prefetch
/// thread feeding a bounded queue (capacity 2).
fn for_each_batch(
    store: &SampleStore,
    augmenter: &Augmenter,
    seed: u64,
    epoch: u64,
    batch_size: usize,
    mode: SamplingMode,
    threads: usize,
    mut f: impl FnMut(Batch),
) {
    let plan = EpochPlan::new(store, seed, epoch, mode);
    if threads == 0 {
        for chunk in plan.chunks(batch_size) {
            f(assemble_batch(store, augmenter, plan.epoch_seed, chunk, 1));
        }
    } else {
        std::thread::scope(|scope| {
            let (tx, rx) = std::sync::mpsc::sync_channel::<Batch>(2);
            let plan = &plan;
            scope.spawn(move || {
                for chunk in plan.chunks(batch_size) {
                    let batch = assemble_batch(store, augmenter, plan.epoch_seed, chunk, threads);
                    if tx.send(batch).is_err() {
                        break;
                    }
                }
            });
            for batch in rx {
                f(batch);
            }
        });
    }
}

#[derive(Debug, Clone, Copy)]
struct Progress {
    next_epoch: usize,
    global_step: usize,
    best_loss: f64,
    best_epoch: usize,
}

impl Default for Progress {
    fn default() -> Self {
        Self { next_epoch: 0, global_step: 0, best_loss: f64::INFINITY, best_epoch: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    /// Mean reconstruction loss per epoch run in this invocation.
    pub epoch_losses: Vec<f64>,
    pub best_loss: f64,
    pub best_epoch: usize,
    pub best_checkpoint: Option<PathBuf>,
    pub last_checkpoint: Option<PathBuf>,
    pub state_file: Option<PathBuf>,
}

/// Pretrain on the manifest's train split. `resume` continues from a state
/// sidecar written by an earlier invocation with the same config.
pub fn pretrain(
    config: &ExperimentConfig,
    manifest: &DatasetManifest,
    resume: Option<&Path>,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<PretrainOutcome> {
    config.validate()?;
    let t = &config.train;
    let store =
        build_training_set(manifest, Split::Train, config.data.normalization, &config.align)?;
    let model_config = config.model_config(None)?;
    let augmenter = config.augmenter(TrainMode::Pretrain);
    augmenter.validate()?;

    let batches_per_epoch = store.len().div_ceil(t.batch_size);
    let total_steps = (t.epochs * batches_per_epoch).max(1);
    let warmup_steps = t.warmup_epochs * batches_per_epoch;
    let adam_cfg = AdamWConfig {
        beta1: t.beta1,
        beta2: t.beta2,
        eps: t.eps,
        weight_decay: t.weight_decay,
    };

    let (mut model, mut opt, mut progress) = match resume {
        Some(path) => {
            let (model, opt, progress) = load_state(path, adam_cfg)?;
            if model.config != model_config {
                return Err(Error::validation(format!(
                    "resume: state model config {:?} does not match the run config {:?}",
                    model.config, model_config
                )));
            }
            (model, opt, progress)
        }
        None => {
            let model = Model::init(model_config, t.seed)?;
            let trainable =
                trainable_mask(&model.params, TrainMode::Pretrain, model.config.encoding);
            let opt = AdamW::new(&model.params, adam_cfg, &trainable);
            (model, opt, Progress::default())
        }
    };

    let out_dir = t.out_dir.as_deref();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut log = TrainLog::open(out_dir, "pretrain_log.jsonl")?;
    let best_path = out_dir.map(|d| d.join("best.adck"));
    let last_path = out_dir.map(|d| d.join("last.adck"));
    let state_path = out_dir.map(|d| d.join("last.state"));

    let mut epoch_losses = Vec::new();
    for epoch in progress.next_epoch..t.epochs {
        let mut sum = 0.0;
        let mut count = 0usize;
        {
            let model_ref = &mut model;
            let opt_ref = &mut opt;
            let progress_ref = &mut progress;
            let log_ref = &mut log;
            for_each_batch(
                &store,
                &augmenter,
                t.seed,
                epoch as u64,
                t.batch_size,
                config.sampling_mode(),
                t.threads,
                |batch| {
                    let dropout =
                        dropout_ctx(model_ref.config.dropout, t.seed, progress_ref.global_step);
                    let out =
                        model_ref.forward_recon(&batch.input_time, &batch.input_freq, dropout);
                    let recon = masked_recon_loss(
                        &out.pred_time,
                        &out.pred_freq,
                        &batch.target_time,
                        &batch.target_freq,
                        &batch.q_time,
                        &batch.q_freq,
                        model_ref.config.encoding,
                        t.shared_n,
                    );
                    let mut grads =
                        model_ref.backward_recon(&out.tape, &recon.d_pred_time, &recon.d_pred_freq);
                    clip_gradients(&mut grads, t.clip_max_norm);
                    let lr =
                        lr_at(progress_ref.global_step, total_steps, warmup_steps, t.base_lr);
                    opt_ref.step(&mut model_ref.params, &grads, lr);
                    log_ref.record(epoch, progress_ref.global_step, lr, recon.loss);
                    progress_ref.global_step += 1;
                    sum += recon.loss;
                    count += 1;
                },
            );
        }
        let mean = sum / count as f64;
        epoch_losses.push(mean);
        progress.next_epoch = epoch + 1;
        if mean < progress.best_loss {
            progress.best_loss = mean;
            progress.best_epoch = epoch;
            if let Some(path) = &best_path {
                checkpoint::save(&model, path)?;
            }
        }
        if let Some(path) = &last_path {
            checkpoint::save(&model, path)?;
        }
        if let Some(path) = &state_path {
            save_state(path, &model, &opt, &progress)?;
        }
        log.flush();
        on_epoch(epoch, mean);
    }

    Ok(PretrainOutcome {
        epoch_losses,
        best_loss: progress.best_loss,
        best_epoch: progress.best_epoch,
        best_checkpoint: best_path,
        last_checkpoint: last_path,
        state_file: state_path,
    })
}

/// Class predictions and true labels over a store, in store order.
pub fn predict(model: &Model, store: &SampleStore, batch_size: usize) -> Result<(Vec<u32>, Vec<u32>)> {
    let mut preds = Vec::with_capacity(store.len());
    let mut labels = Vec::with_capacity(store.len());
    let refs: Vec<&crate::align::AlignedSample> = store.samples.iter().collect();
    for chunk in refs.chunks(batch_size.max(1)) {
        let batch = stack_clean(chunk);
        for (i, label) in batch.labels.iter().enumerate() {
            match label {
                Some(l) => labels.push(*l),
                None => {
                    return Err(Error::validation(format!(
                        "evaluate: dataset {} has an unlabeled sample",
                        batch.dataset_ids[i]
                    )))
                }
            }
        }
        let out = model.forward_classify(&batch.input_time, &batch.input_freq, None)?;
        preds.extend(predictions(&out.logits));
    }
    Ok((preds, labels))
}

/// The single class count declared by every labeled entry of the manifest.
pub fn declared_classes(manifest: &DatasetManifest) -> Result<usize> {
    let mut found: Option<u32> = None;
    for entry in &manifest.entries {
        match (entry.classes, found) {
            (Some(c), None) => found = Some(c),
            (Some(c), Some(prev)) if c != prev => {
                return Err(Error::validation(format!(
                    "manifest: dataset {} declares {} classes, other entries declare {}",
                    entry.id, c, prev
                )));
            }
            _ => {}
        }
    }
    found
        .map(|c| c as usize)
        .ok_or_else(|| Error::validation("manifest: no entry declares a class count"))
}

fn finetune_batch(
    store: &SampleStore,
    indices: &[usize],
    noise: &NoiseConfig,
    noise_enabled: bool,
    epoch_seed: u64,
) -> Batch {
    if !noise_enabled {
        let refs: Vec<_> = indices.iter().map(|&i| &store.samples[i]).collect();
        return stack_clean(&refs);
    }
    let noised: Vec<crate::align::AlignedSample> = indices
        .iter()
        .map(|&i| {
            let sample = &store.samples[i];
            let seed = derive2(epoch_seed, 0xF7, i as u64);
            crate::align::AlignedSample {
                time_repr: add_noise(
                    &sample.time_repr,
                    &mut stream(seed, Stream::NoiseTime),
                    noise,
                    true,
                ),
                freq_repr: add_noise(
                    &sample.freq_repr,
                    &mut stream(seed, Stream::NoiseFreq),
                    noise,
                    true,
                ),
                label: sample.label,
                dataset_id: sample.dataset_id.clone(),
            }
        })
        .collect();
    let refs: Vec<_> = noised.iter().collect();
    stack_clean(&refs)
}

fn require_labels(store: &SampleStore, what: &str) -> Result<()> {
    for s in &store.samples {
        if s.label.is_none() {
            return Err(Error::validation(format!(
                "{what}: dataset {} has unlabeled samples",
                s.dataset_id
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub per_seed: Vec<MetricsReport>,
    pub aggregate: AggregateReport,
    pub checkpoints: Vec<PathBuf>,
}

/// Fine-tune a pretrained checkpoint for classification on one manifest.
///
/// Runs `config.train.seeds` repetitions with consecutive seeds. Each run
/// attaches a fresh classifier, trains on the train split (frozen encoder in
/// LC mode), tracks the best epoch by validation macro F1 when a val split
/// exists, and reports metrics on the test split.
pub fn finetune(
    config: &ExperimentConfig,
    checkpoint_path: &Path,
    manifest: &DatasetManifest,
    mut on_epoch: impl FnMut(usize, usize, f64),
) -> Result<FinetuneOutcome> {
    config.validate()?;
    let t = &config.train;
    let mode = t.mode;
    if mode == TrainMode::Pretrain {
        return Err(Error::validation("finetune: train.mode is set to pretrain"));
    }

    let n_classes = declared_classes(manifest)?;
    let train_store =
        build_training_set(manifest, Split::Train, config.data.normalization, &config.align)?;
    require_labels(&train_store, "finetune train split")?;
    let val_store = if manifest.entries_for(Split::Val).count() > 0 {
        let store =
            build_training_set(manifest, Split::Val, config.data.normalization, &config.align)?;
        require_labels(&store, "finetune val split")?;
        Some(store)
    } else {
        None
    };
    if manifest.entries_for(Split::Test).count() == 0 {
        return Err(Error::validation("finetune: manifest has no test entries to report on"));
    }
    let test_store =
        build_training_set(manifest, Split::Test, config.data.normalization, &config.align)?;
    require_labels(&test_store, "finetune test split")?;

    let noise = config.augment.noise_config();
    let noise_enabled = noise.enabled_finetune;
    let adam_cfg = AdamWConfig {
        beta1: t.beta1,
        beta2: t.beta2,
        eps: t.eps,
        weight_decay: t.weight_decay,
    };
    let out_dir = t.out_dir.as_deref();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }

    let batches_per_epoch = train_store.len().div_ceil(t.batch_size);
    let total_steps = (t.epochs * batches_per_epoch).max(1);
    let warmup_steps = t.warmup_epochs * batches_per_epoch;

    let mut per_seed = Vec::new();
    let mut checkpoints = Vec::new();
    for s in 0..t.seeds {
        let seed = t.seed + s as u64;
        let mut model = checkpoint::load(checkpoint_path)?;
        check_checkpoint_compat(&model, config)?;
        model.config.dropout = config.model.dropout;
        model.attach_classifier(n_classes)?;

        let mut log = TrainLog::open(out_dir, &format!("finetune_seed{seed}_log.jsonl"))?;
        let mut opt = match mode {
            TrainMode::Finetune => {
                let trainable = trainable_mask(&model.params, mode, model.config.encoding);
                Some(AdamW::new(&model.params, adam_cfg, &trainable))
            }
            _ => None,
        };
        // LC mode keeps moments for the classifier tensors only.
        let mut lc_state = match mode {
            TrainMode::FinetuneLc => {
                let head = model.params.classifier.as_ref().expect("attached above");
                Some((
                    Moments { m: vec![0.0; head.w.len()], v: vec![0.0; head.w.len()] },
                    Moments { m: vec![0.0; head.b.len()], v: vec![0.0; head.b.len()] },
                    0u64,
                ))
            }
            _ => None,
        };

        let mut best: Option<(f64, ModelParams)> = None;
        let mut global_step = 0usize;
        for epoch in 0..t.epochs {
            let plan = EpochPlan::new(&train_store, seed, epoch as u64, config.sampling_mode());
            let mut sum = 0.0;
            let mut count = 0usize;
            for chunk in plan.chunks(t.batch_size) {
                let batch =
                    finetune_batch(&train_store, chunk, &noise, noise_enabled, plan.epoch_seed);
                let labels: Vec<u32> =
                    batch.labels.iter().map(|l| l.expect("validated labels")).collect();
                let dropout = dropout_ctx(model.config.dropout, seed, global_step);
                let out = model.forward_classify(&batch.input_time, &batch.input_freq, dropout)?;
                let ce = cross_entropy(&out.logits, &labels);
                let lr = lr_at(global_step, total_steps, warmup_steps, t.base_lr);
                match mode {
                    TrainMode::Finetune => {
                        let mut grads = model.backward_classify(&out.tape, &ce.d_logits)?;
                        clip_gradients(&mut grads, t.clip_max_norm);
                        opt.as_mut().expect("full mode").step(&mut model.params, &grads, lr);
                    }
                    TrainMode::FinetuneLc => {
                        let mut grad = model.backward_classify_frozen(&out.tape, &ce.d_logits);
                        let (wm, bm, step_count) = lc_state.as_mut().expect("lc mode");
                        {
                            let mut slices: Vec<&mut [f64]> = vec![
                                grad.dw.as_slice_mut().expect("contiguous"),
                                grad.db.as_slice_mut().expect("contiguous"),
                            ];
                            clip_slices(&mut slices, t.clip_max_norm);
                        }
                        *step_count += 1;
                        let head = model.params.classifier.as_mut().expect("attached");
                        adamw_update(
                            head.w.as_slice_mut().expect("contiguous"),
                            grad.dw.as_slice().expect("contiguous"),
                            &mut wm.m,
                            &mut wm.v,
                            *step_count,
                            lr,
                            &adam_cfg,
                        );
                        adamw_update(
                            head.b.as_slice_mut().expect("contiguous"),
                            grad.db.as_slice().expect("contiguous"),
                            &mut bm.m,
                            &mut bm.v,
                            *step_count,
                            lr,
                            &adam_cfg,
                        );
                    }
                    TrainMode::Pretrain => unreachable!(),
                }
                log.record(epoch, global_step, lr, ce.loss);
                global_step += 1;
                sum += ce.loss;
                count += 1;
            }
            let mean = sum / count.max(1) as f64;
            if let Some(val) = &val_store {
                let (preds, labels) = predict(&model, val, t.batch_size)?;
                let f1 = compute_metrics(&preds, &labels, n_classes)?.f1;
                // Ties go to the later epoch: better-trained weights win.
                if best.as_ref().map_or(true, |(b, _)| f1 >= *b) {
                    best = Some((f1, model.params.clone()));
                }
            }
            log.flush();
            on_epoch(s, epoch, mean);
        }
        if let Some((_, params)) = best {
            model.params = params;
        }

        let (preds, labels) = predict(&model, &test_store, t.batch_size)?;
        per_seed.push(compute_metrics(&preds, &labels, n_classes)?);
        if let Some(dir) = out_dir {
            let path = dir.join(format!("finetune_seed{seed}.adck"));
            checkpoint::save(&model, &path)?;
            checkpoints.push(path);
        }
    }

    let aggregate = aggregate_seeds(&per_seed)?;
    Ok(FinetuneOutcome { per_seed, aggregate, checkpoints })
}

fn check_checkpoint_compat(model: &Model, config: &ExperimentConfig) -> Result<()> {
    let m = &model.config;
    let want = config.model_config(m.n_classes)?;
    let same = m.d_model == want.d_model
        && m.n_layers == want.n_layers
        && m.n_heads == want.n_heads
        && m.ffn_dim == want.ffn_dim
        && m.c_in == want.c_in
        && m.seq_len == want.seq_len
        && m.encoding == want.encoding;
    if !same {
        return Err(Error::validation(format!(
            "checkpoint model {m:?} is incompatible with the run config {want:?}"
        )));
    }
    Ok(())
}

// --- training state sidecar ("ADST") --------------------------------------

const STATE_MAGIC: &[u8; 4] = b"ADST";
const STATE_VERSION: u32 = 1;

fn save_state(path: &Path, model: &Model, opt: &AdamW, progress: &Progress) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(STATE_MAGIC)?;
    w.write_all(&STATE_VERSION.to_le_bytes())?;
    let config_json = serde_json::to_vec(&model.config)
        .map_err(|e| Error::format(format!("state config serialize: {e}")))?;
    w.write_all(&(config_json.len() as u32).to_le_bytes())?;
    w.write_all(&config_json)?;
    w.write_all(&(progress.next_epoch as u64).to_le_bytes())?;
    w.write_all(&(progress.global_step as u64).to_le_bytes())?;
    w.write_all(&progress.best_loss.to_le_bytes())?;
    w.write_all(&(progress.best_epoch as u64).to_le_bytes())?;
    w.write_all(&opt.t.to_le_bytes())?;

    let tensors = model.params.visit();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for ((name, tensor), slot) in tensors.iter().zip(&opt.slots) {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        let data = tensor.as_slice();
        w.write_all(&(data.len() as u64).to_le_bytes())?;
        for v in data {
            w.write_all(&v.to_le_bytes())?;
        }
        match slot {
            Some(m) => {
                w.write_all(&[1u8])?;
                for v in m.m.iter().chain(m.v.iter()) {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            None => w.write_all(&[0u8])?,
        }
    }
    w.flush()?;
    Ok(())
}

fn load_state(path: &Path, adam_cfg: AdamWConfig) -> Result<(Model, AdamW, Progress)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let name = path.display().to_string();
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::format(format!("{name}: too short")))?;
    if &magic != STATE_MAGIC {
        return Err(Error::format(format!("{name}: bad magic {magic:?}, expected \"ADST\"")));
    }
    let version = read_u32(&mut r, &name)?;
    if version != STATE_VERSION {
        return Err(Error::format(format!("{name}: unsupported version {version}")));
    }
    let config_len = read_u32(&mut r, &name)? as usize;
    let mut config_bytes = vec![0u8; config_len];
    r.read_exact(&mut config_bytes).map_err(|_| Error::corrupt(format!("{name}: truncated")))?;
    let config: crate::model::ModelConfig = serde_json::from_slice(&config_bytes)
        .map_err(|e| Error::format(format!("{name}: bad config: {e}")))?;

    let progress = Progress {
        next_epoch: read_u64(&mut r, &name)? as usize,
        global_step: read_u64(&mut r, &name)? as usize,
        best_loss: f64::from_le_bytes(read_bytes8(&mut r, &name)?),
        best_epoch: read_u64(&mut r, &name)? as usize,
    };
    let adam_t = read_u64(&mut r, &name)?;

    let mut model = Model::zeros(config)?;
    let tensor_count = read_u32(&mut r, &name)? as usize;
    let mut slots_data: Vec<Option<Moments>> = Vec::with_capacity(tensor_count);
    {
        let mut slots = model.params.visit_mut();
        if tensor_count != slots.len() {
            return Err(Error::corrupt(format!(
                "{name}: {tensor_count} tensors, model expects {}",
                slots.len()
            )));
        }
        for (expected_name, slot) in slots.iter_mut() {
            let ctx = format!("{name}: tensor {expected_name}");
            let nlen = read_u32(&mut r, &ctx)? as usize;
            let mut nbytes = vec![0u8; nlen];
            r.read_exact(&mut nbytes).map_err(|_| Error::corrupt(format!("{ctx}: truncated")))?;
            if nbytes != expected_name.as_bytes() {
                return Err(Error::corrupt(format!("{ctx}: tensor name mismatch")));
            }
            let len = read_u64(&mut r, &ctx)? as usize;
            let out = slot.as_slice_mut();
            if len != out.len() {
                return Err(Error::corrupt(format!("{ctx}: length mismatch")));
            }
            for v in out.iter_mut() {
                *v = f64::from_le_bytes(read_bytes8(&mut r, &ctx)?);
            }
            let mut flag = [0u8; 1];
            r.read_exact(&mut flag).map_err(|_| Error::corrupt(format!("{ctx}: truncated")))?;
            if flag[0] == 1 {
                let mut m = vec![0.0f64; len];
                let mut v = vec![0.0f64; len];
                for x in m.iter_mut() {
                    *x = f64::from_le_bytes(read_bytes8(&mut r, &ctx)?);
                }
                for x in v.iter_mut() {
                    *x = f64::from_le_bytes(read_bytes8(&mut r, &ctx)?);
                }
                slots_data.push(Some(Moments { m, v }));
            } else {
                slots_data.push(None);
            }
        }
    }
    let opt = AdamW { cfg: adam_cfg, t: adam_t, slots: slots_data };
    Ok((model, opt, progress))
}

fn read_u32(r: &mut impl Read, ctx: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|_| Error::corrupt(format!("{ctx}: truncated")))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read, ctx: &str) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(|_| Error::corrupt(format!("{ctx}: truncated")))?;
    Ok(u64::from_le_bytes(buf))
}

fn read_bytes8(r: &mut impl Read, ctx: &str) -> Result<[u8; 8]> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(|_| Error::corrupt(format!("{ctx}: truncated")))?;
    Ok(buf)
}
