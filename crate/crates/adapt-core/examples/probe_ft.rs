// Scratch harness: instrumented fine-tune loop with per-epoch test accuracy
// and per-dataset breakdowns.

use adapt_core::batch::{build_training_set, EpochPlan, SamplingMode};
use adapt_core::config::ExperimentConfig;
use adapt_core::data::{DatasetManifest, Split};
use adapt_core::eval::compute_metrics;
use adapt_core::model::checkpoint;
use adapt_core::model::loss::{cross_entropy, predictions};
use adapt_core::model::Encoding;
use adapt_core::synth::{generate_corpus, SynthOptions};
use adapt_core::train::{
    clip_gradients, lr_at, pretrain, predict, trainable_mask, AdamW, AdamWConfig, TrainMode,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let ft_lr: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let ft_epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(50);
    let use_val: bool = args.get(4).map(|s| s == "1").unwrap_or(true);
    let wd: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0.01);

    let data_dir = tempfile::tempdir().unwrap();
    let manifest_path = generate_corpus(data_dir.path(), &SynthOptions::default()).unwrap();
    let manifest = DatasetManifest::load(&manifest_path).unwrap();

    let out_dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::default();
    config.data.manifest = Some(manifest_path.clone());
    config.align.l_out = 64;
    config.align.c_out = 8;
    config.align.normalize_spectrum = true;
    config.model.d_model = 32;
    config.model.n_layers = 2;
    config.model.n_heads = 4;
    config.model.ffn_dim = 64;
    config.model.encoding = Encoding::Joint;
    config.train.base_lr = 1e-3;
    config.train.epochs = 50;
    config.train.warmup_epochs = 5;
    config.train.batch_size = 16;
    config.train.seed = seed;
    config.train.out_dir = Some(out_dir.path().to_path_buf());

    let outcome = pretrain(&config, &manifest, None, |_, _| {}).unwrap();
    eprintln!(
        "pretrain: first {:.4} best {:.4}",
        outcome.epoch_losses[0], outcome.best_loss
    );

    let train_store =
        build_training_set(&manifest, Split::Train, config.data.normalization, &config.align)
            .unwrap();
    let val_store =
        build_training_set(&manifest, Split::Val, config.data.normalization, &config.align)
            .unwrap();
    let test_store =
        build_training_set(&manifest, Split::Test, config.data.normalization, &config.align)
            .unwrap();

    for s in 0..5u64 {
        let ft_seed = seed + s;
        let mut model = checkpoint::load(outcome.best_checkpoint.as_ref().unwrap()).unwrap();
        model.attach_classifier(2).unwrap();
        let trainable = trainable_mask(&model.params, TrainMode::Finetune, model.config.encoding);
        let adam = AdamWConfig { weight_decay: wd, ..Default::default() };
        let mut opt = AdamW::new(&model.params, adam, &trainable);

        let bpe = train_store.len().div_ceil(16);
        let total = ft_epochs * bpe;
        let warmup = 5 * bpe;
        let mut best: Option<(f64, adapt_core::model::ModelParams, usize)> = None;
        let mut step = 0usize;
        for epoch in 0..ft_epochs {
            let plan = EpochPlan::new(&train_store, ft_seed, epoch as u64, SamplingMode::Proportional);
            for chunk in plan.chunks(16) {
                let refs: Vec<_> = chunk.iter().map(|&i| &train_store.samples[i]).collect();
                let batch = adapt_core::batch::stack_clean(&refs);
                let labels: Vec<u32> = batch.labels.iter().map(|l| l.unwrap()).collect();
                let out = model
                    .forward_classify(&batch.input_time, &batch.input_freq, None)
                    .unwrap();
                let ce = cross_entropy(&out.logits, &labels);
                let mut grads = model.backward_classify(&out.tape, &ce.d_logits).unwrap();
                clip_gradients(&mut grads, 1.0);
                let lr = lr_at(step, total, warmup, ft_lr);
                opt.step(&mut model.params, &grads, lr);
                step += 1;
            }
            let (vp, vl) = predict(&model, &val_store, 64).unwrap();
            let val_f1 = compute_metrics(&vp, &vl, 2).unwrap().f1;
            let (tp, tl) = predict(&model, &test_store, 64).unwrap();
            let test_acc = compute_metrics(&tp, &tl, 2).unwrap().accuracy;
            if epoch % 5 == 0 || epoch == ft_epochs - 1 {
                eprintln!("  seed {s} epoch {epoch}: val_f1 {val_f1:.4} test_acc {test_acc:.4}");
            }
            if use_val && best.as_ref().map_or(true, |(b, _, _)| val_f1 >= *b) {
                best = Some((val_f1, model.params.clone(), epoch));
            }
        }
        if let Some((f1, params, at)) = best {
            model.params = params;
            eprintln!("  seed {s}: snapshot from epoch {at} (val_f1 {f1:.4})");
        }
        let (tp, tl) = predict(&model, &test_store, 64).unwrap();
        let acc = compute_metrics(&tp, &tl, 2).unwrap().accuracy;
        // Per-dataset breakdown.
        let mut per: std::collections::BTreeMap<String, (usize, usize)> = Default::default();
        for (i, sample) in test_store.samples.iter().enumerate() {
            let e = per.entry(sample.dataset_id.clone()).or_default();
            e.1 += 1;
            if tp[i] == tl[i] {
                e.0 += 1;
            }
        }
        let breakdown: Vec<String> =
            per.iter().map(|(k, (c, n))| format!("{k} {c}/{n}")).collect();
        eprintln!("seed {s}: test acc {acc:.4} [{}]", breakdown.join(", "));
    }
}
