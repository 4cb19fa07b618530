// Scratch harness for tuning the desk-scale recipe.

use adapt_core::config::ExperimentConfig;
use adapt_core::data::DatasetManifest;
use adapt_core::model::Encoding;
use adapt_core::synth::{generate_corpus, SynthOptions};
use adapt_core::train::{finetune, pretrain, TrainMode};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ft_lr: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let ft_epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(50);
    let d_model: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(32);
    let pt_epochs: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(50);
    let ft_noise: bool = args.get(5).map(|s| s == "1").unwrap_or(false);
    let lc: bool = args.get(6).map(|s| s == "1").unwrap_or(false);
    let dropout: f64 = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let ft_sigma: f64 = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let norm_spectrum: bool = args.get(9).map(|s| s == "1").unwrap_or(false);
    let seed: u64 = args.get(10).and_then(|s| s.parse().ok()).unwrap_or(42);
    let ffn_mult: usize = args.get(11).and_then(|s| s.parse().ok()).unwrap_or(2);
    let batch: usize = args.get(12).and_then(|s| s.parse().ok()).unwrap_or(16);
    let wd: f64 = args.get(13).and_then(|s| s.parse().ok()).unwrap_or(0.01);

    let data_dir = tempfile::tempdir().unwrap();
    let manifest_path = generate_corpus(data_dir.path(), &SynthOptions::default()).unwrap();
    let manifest = DatasetManifest::load(&manifest_path).unwrap();

    let out_dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::default();
    config.data.manifest = Some(manifest_path.clone());
    config.align.l_out = 64;
    config.align.c_out = 8;
    config.align.normalize_spectrum = norm_spectrum;
    config.model.d_model = d_model;
    config.model.n_layers = 2;
    config.model.n_heads = 4;
    config.model.ffn_dim = d_model * ffn_mult;
    config.model.encoding = Encoding::Joint;
    config.train.base_lr = 1e-3;
    config.train.epochs = pt_epochs;
    config.train.warmup_epochs = 5;
    config.train.batch_size = batch;
    config.train.seed = seed;
    config.train.out_dir = Some(out_dir.path().to_path_buf());

    let t0 = std::time::Instant::now();
    let outcome = pretrain(&config, &manifest, None, |e, l| {
        if e % 10 == 0 {
            eprintln!("pretrain epoch {e}: {l:.4}");
        }
    })
    .unwrap();
    eprintln!(
        "pretrain: first {:.4} last {:.4} best {:.4} ({:?})",
        outcome.epoch_losses[0],
        outcome.epoch_losses.last().unwrap(),
        outcome.best_loss,
        t0.elapsed()
    );

    let mut ft = config.clone();
    ft.train.mode = if lc { TrainMode::FinetuneLc } else { TrainMode::Finetune };
    ft.augment.noise_finetune = ft_noise;
    ft.augment.noise_sigma = ft_sigma;
    ft.model.dropout = dropout;
    ft.train.base_lr = ft_lr;
    ft.train.weight_decay = wd;
    ft.train.epochs = ft_epochs;
    ft.train.warmup_epochs = (ft_epochs / 10).max(1);
    ft.train.seeds = 5;
    ft.train.out_dir = None;
    let t1 = std::time::Instant::now();
    let result = finetune(&ft, &outcome.best_checkpoint.unwrap(), &manifest, |s, e, l| {
        if e % 10 == 0 {
            eprintln!("seed {s} epoch {e}: ce {l:.4}");
        }
    })
    .unwrap();
    for (i, r) in result.per_seed.iter().enumerate() {
        eprintln!("seed {i}: acc {:.4} f1 {:.4}", r.accuracy, r.f1);
    }
    eprintln!(
        "aggregate: {} ({:?} finetune)",
        result.aggregate.formatted(),
        t1.elapsed()
    );
}
