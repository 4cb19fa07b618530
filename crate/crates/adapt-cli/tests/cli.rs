//! End-to-end checks of the `adapt` binary: exit codes, output contracts,
//! and seeded reproducibility through the full command-line surface.

use std::path::Path;
use std::process::{Command, Output};

use adapt_core::synth::{generate_corpus, SynthOptions};

fn adapt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adapt")).args(args).output().expect("binary runs")
}

fn adapt_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_adapt"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

/// Desk-scale config pointing at a generated corpus.
fn write_desk_config(dir: &Path, manifest: &Path, out_dir: &Path) -> std::path::PathBuf {
    let path = dir.join("desk.toml");
    std::fs::write(
        &path,
        format!(
            r#"
[data]
manifest = "{manifest}"

[align]
l_out = 32
c_out = 4

[model]
d_model = 16
n_layers = 1
n_heads = 2
ffn_dim = 32

[train]
base_lr = 1e-3
epochs = 2
warmup_epochs = 1
batch_size = 16
seed = 5
out_dir = "{out_dir}"
"#,
            manifest = manifest.display(),
            out_dir = out_dir.display(),
        ),
    )
    .unwrap();
    path
}

#[test]
fn inspect_pool_prints_the_kernel_table() {
    let out = adapt(&["inspect-pool", "--n", "5", "--m", "3"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("0 0 2 2"), "missing kernel row in:\n{text}");
    assert!(text.contains("1 1 4 3"), "missing kernel row in:\n{text}");
    assert!(text.contains("2 3 5 2"), "missing kernel row in:\n{text}");
}

#[test]
fn unknown_verb_exits_with_usage_error() {
    let out = adapt(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!stderr(&out).is_empty());
}

#[test]
fn unknown_flag_exits_with_usage_error() {
    let out = adapt(&["inspect-pool", "--n", "5", "--m", "3", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_zero_and_documents_defaults() {
    let out = adapt(&["pretrain", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("--mask-ratio"));
    assert!(text.contains("Defaults and conventions"), "help should point at the README section");
}

#[test]
fn missing_manifest_is_a_validation_error_naming_the_flag() {
    let out = adapt(&["pretrain"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--manifest"), "stderr: {}", stderr(&out));
}

#[test]
fn corrupt_dataset_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.adts");
    std::fs::write(&bad, b"NOTADTS").unwrap();
    let out_path = dir.path().join("aligned.adts");
    let out = adapt(&[
        "align",
        "--in",
        bad.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
}

#[test]
fn convert_then_align_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv_a = dir.path().join("a.csv");
    let csv_b = dir.path().join("b.csv");
    std::fs::write(&csv_a, "# label = 0\n1.0,2.0\n2.0,3.0\n3.0,4.0\n").unwrap();
    std::fs::write(&csv_b, "# label = 1\n5.0,1.0\n6.0,2.0\n").unwrap();
    let data_path = dir.path().join("tiny.adts");
    let out = adapt(&[
        "convert",
        "--out",
        data_path.to_str().unwrap(),
        "--classes",
        "2",
        csv_a.to_str().unwrap(),
        csv_b.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("wrote 2 samples"));

    let aligned_path = dir.path().join("aligned.adts");
    let out = adapt(&[
        "align",
        "--in",
        data_path.to_str().unwrap(),
        "--out",
        aligned_path.to_str().unwrap(),
        "--l-out",
        "16",
        "--c-out",
        "4",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let aligned = adapt_core::data::read_samples(&aligned_path, "aligned").unwrap();
    assert_eq!(aligned.len(), 2);
    for s in &aligned {
        assert_eq!(s.values.dim(), (16, 8)); // 4 time + 4 freq channels
    }
    assert_eq!(aligned[0].label, Some(0));
    assert_eq!(aligned[1].label, Some(1));
}

#[test]
fn convert_rejects_label_out_of_range() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "# label = 7\n1.0\n2.0\n").unwrap();
    let out = adapt(&[
        "convert",
        "--out",
        dir.path().join("x.adts").to_str().unwrap(),
        "--classes",
        "2",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn pretrain_is_reproducible_and_echoes_config() {
    let data_dir = tempfile::tempdir().unwrap();
    let manifest =
        generate_corpus(data_dir.path(), &SynthOptions { samples_per_dataset: 10, ..Default::default() })
            .unwrap();

    let run = |out_dir: &Path| {
        let cfg_dir = tempfile::tempdir().unwrap();
        let config = write_desk_config(cfg_dir.path(), &manifest, out_dir);
        let out = adapt(&["pretrain", "--config", config.to_str().unwrap(), "--seed", "7"]);
        assert!(out.status.success(), "stderr: {}", stderr(&out));
        stdout(&out)
    };
    let out_a = tempfile::tempdir().unwrap();
    let out_b = tempfile::tempdir().unwrap();
    let text_a = run(out_a.path());
    let text_b = run(out_b.path());

    // The resolved config is echoed, including the flag-overridden seed.
    assert!(text_a.contains("# resolved config"));
    assert!(text_a.contains("seed = 7"));

    let final_loss = |text: &str| {
        text.lines()
            .find(|l| l.starts_with("pretraining done"))
            .map(|l| l.to_string())
            .expect("final loss line")
    };
    assert_eq!(final_loss(&text_a), final_loss(&text_b));
    assert_eq!(
        std::fs::read(out_a.path().join("last.adck")).unwrap(),
        std::fs::read(out_b.path().join("last.adck")).unwrap()
    );
}

#[test]
fn env_seed_is_used_and_flag_wins_over_it() {
    let out = adapt_env(&["pretrain"], &[("ADAPT_SEED", "123")]);
    // Fails for the missing manifest, but the echo happens first.
    assert!(stdout(&out).contains("seed = 123"));

    let out = adapt_env(&["pretrain", "--seed", "9"], &[("ADAPT_SEED", "123")]);
    assert!(stdout(&out).contains("seed = 9"));
}

#[test]
fn full_workflow_finetune_eval_export() {
    let data_dir = tempfile::tempdir().unwrap();
    let manifest =
        generate_corpus(data_dir.path(), &SynthOptions { samples_per_dataset: 10, ..Default::default() })
            .unwrap();
    let out_dir = tempfile::tempdir().unwrap();
    let cfg_dir = tempfile::tempdir().unwrap();
    let config = write_desk_config(cfg_dir.path(), &manifest, out_dir.path());

    let out = adapt(&["pretrain", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let ckpt = out_dir.path().join("last.adck");

    let ft_dir = tempfile::tempdir().unwrap();
    let out = adapt(&[
        "finetune",
        "--config",
        config.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--out-dir",
        ft_dir.path().to_str().unwrap(),
        "--seeds",
        "2",
        "--epochs",
        "2",
        "--warmup-epochs",
        "0",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("aggregate over 2 seeds"), "missing aggregate in:\n{text}");
    assert!(text.contains('\u{b1}'), "mean/sd notation missing in:\n{text}");

    let tuned = ft_dir.path().join("finetune_seed5.adck");
    assert!(tuned.exists());

    let report = ft_dir.path().join("report.json");
    let out = adapt(&[
        "eval",
        "--config",
        config.to_str().unwrap(),
        "--checkpoint",
        tuned.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(parsed["accuracy"].as_f64().unwrap() >= 0.0);
    assert!(parsed["per_class"].is_array());

    // Pooled embeddings: 2 * 32 * 4 feature columns + label.
    let pooled = ft_dir.path().join("pooled.csv");
    let out = adapt(&[
        "export-embeddings",
        "--config",
        config.to_str().unwrap(),
        "--stage",
        "pooled",
        "--out",
        pooled.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = std::fs::read_to_string(&pooled).unwrap();
    let header_cols = text.lines().next().unwrap().split(',').count();
    assert_eq!(header_cols, 2 * 32 * 4 + 1);
    // 4 datasets x 2 test samples each.
    assert_eq!(text.lines().count(), 1 + 8);

    // Encoded embeddings: d_model columns + label.
    let encoded = ft_dir.path().join("encoded.csv");
    let out = adapt(&[
        "export-embeddings",
        "--config",
        config.to_str().unwrap(),
        "--stage",
        "encoded",
        "--checkpoint",
        tuned.to_str().unwrap(),
        "--out",
        encoded.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = std::fs::read_to_string(&encoded).unwrap();
    assert_eq!(text.lines().next().unwrap().split(',').count(), 16 + 1);

    // Raw export fails across shape-mismatched datasets, naming a sample.
    let raw = ft_dir.path().join("raw.csv");
    let out = adapt(&[
        "export-embeddings",
        "--config",
        config.to_str().unwrap(),
        "--stage",
        "raw",
        "--out",
        raw.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("sample"), "stderr: {}", stderr(&out));

    // Encoded export without a checkpoint is a validation error.
    let out = adapt(&[
        "export-embeddings",
        "--config",
        config.to_str().unwrap(),
        "--stage",
        "encoded",
        "--out",
        encoded.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_requires_a_classifier_checkpoint() {
    let data_dir = tempfile::tempdir().unwrap();
    let manifest =
        generate_corpus(data_dir.path(), &SynthOptions { samples_per_dataset: 10, ..Default::default() })
            .unwrap();
    let out_dir = tempfile::tempdir().unwrap();
    let cfg_dir = tempfile::tempdir().unwrap();
    let config = write_desk_config(cfg_dir.path(), &manifest, out_dir.path());
    let out = adapt(&["pretrain", "--config", config.to_str().unwrap()]);
    assert!(out.status.success());

    let out = adapt(&[
        "eval",
        "--config",
        config.to_str().unwrap(),
        "--checkpoint",
        out_dir.path().join("last.adck").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("classifier"), "stderr: {}", stderr(&out));
}
