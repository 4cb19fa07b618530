// Scratch harness: logistic regression directly on pooled representations.

use ndarray::Array2;

use adapt_core::align::AlignOptions;
use adapt_core::batch::build_training_set;
use adapt_core::data::{DatasetManifest, NormalizationScope, Split};
use adapt_core::model::layers::Linear;
use adapt_core::model::loss::{cross_entropy, predictions};
use adapt_core::synth::{generate_corpus, SynthOptions};
use adapt_core::train::{adamw_update, AdamWConfig, Moments};

fn flatten_store(
    store: &adapt_core::batch::SampleStore,
    take_time: bool,
    take_freq: bool,
) -> (Array2<f64>, Vec<u32>) {
    let n = store.len();
    let (l, c) = store.samples[0].time_repr.dim();
    let per = l * c;
    let width = per * (take_time as usize + take_freq as usize);
    let mut x = Array2::zeros((n, width));
    let mut y = Vec::with_capacity(n);
    for (i, s) in store.samples.iter().enumerate() {
        let mut col = 0;
        if take_time {
            for v in s.time_repr.iter() {
                x[(i, col)] = *v;
                col += 1;
            }
        }
        if take_freq {
            for v in s.freq_repr.iter() {
                x[(i, col)] = *v;
                col += 1;
            }
        }
        y.push(s.label.unwrap());
    }
    (x, y)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let take_time: bool = args.get(1).map(|s| s == "1").unwrap_or(true);
    let take_freq: bool = args.get(2).map(|s| s == "1").unwrap_or(true);

    let data_dir = tempfile::tempdir().unwrap();
    let manifest_path = generate_corpus(data_dir.path(), &SynthOptions::default()).unwrap();
    let manifest = DatasetManifest::load(&manifest_path).unwrap();
    let align = AlignOptions { l_out: 64, c_out: 8, ..Default::default() };
    let train =
        build_training_set(&manifest, Split::Train, NormalizationScope::PerSample, &align).unwrap();
    let test =
        build_training_set(&manifest, Split::Test, NormalizationScope::PerSample, &align).unwrap();

    let (x_train, y_train) = flatten_store(&train, take_time, take_freq);
    let (x_test, y_test) = flatten_store(&test, take_time, take_freq);

    let mut head = Linear::zeros(x_train.ncols(), 2);
    let cfg = AdamWConfig { weight_decay: 0.001, ..Default::default() };
    let mut wm = Moments { m: vec![0.0; head.w.len()], v: vec![0.0; head.w.len()] };
    let mut bm = Moments { m: vec![0.0; head.b.len()], v: vec![0.0; head.b.len()] };
    for t in 1..=2000u64 {
        let logits = head.forward(&x_train);
        let ce = cross_entropy(&logits, &y_train);
        let (_, grad) = head.backward(&x_train, &ce.d_logits);
        adamw_update(
            head.w.as_slice_mut().unwrap(),
            grad.dw.as_slice().unwrap(),
            &mut wm.m,
            &mut wm.v,
            t,
            0.01,
            &cfg,
        );
        adamw_update(
            head.b.as_slice_mut().unwrap(),
            grad.db.as_slice().unwrap(),
            &mut bm.m,
            &mut bm.v,
            t,
            0.01,
            &cfg,
        );
        if t % 500 == 0 {
            eprintln!("step {t}: ce {:.4}", ce.loss);
        }
    }
    let acc = |x: &Array2<f64>, y: &[u32]| {
        let preds = predictions(&head.forward(x));
        preds.iter().zip(y).filter(|(p, l)| p == l).count() as f64 / y.len() as f64
    };
    eprintln!(
        "time={take_time} freq={take_freq}: train acc {:.4}, test acc {:.4}",
        acc(&x_train, &y_train),
        acc(&x_test, &y_test)
    );
}
