//! End-to-end tests driving the compiled binary: corpus generation, BPE
//! learning, training, translation, scoring, and parameter counting.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_polynmt"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn run_err(args: &[&str]) -> String {
    let out = run(args);
    assert!(!out.status.success(), "command {args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "expected one diagnostic line, got: {err}");
    err
}

fn gen_toy(dir: &Path, pairs: &[&str], sentences: usize, dev: usize) {
    let mut args = vec![
        "gen-toy".to_string(),
        "--out-dir".into(),
        dir.display().to_string(),
        "--sentences".into(),
        sentences.to_string(),
        "--dev-sentences".into(),
        dev.to_string(),
        "--seed".into(),
        "4".into(),
        "--pair".into(),
    ];
    args.extend(pairs.iter().map(|p| p.to_string()));
    let arg_refs: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
    run_ok(&arg_refs);
}

#[test]
fn learn_bpe_is_deterministic_and_counts_merges() {
    let dir = tempfile::tempdir().unwrap();
    gen_toy(dir.path(), &["cp=copy"], 32, 0);
    let input = dir.path().join("train.cp");
    let out_a = dir.path().join("a.bpe");
    let out_b = dir.path().join("b.bpe");
    for out in [&out_a, &out_b] {
        run_ok(&[
            "learn-bpe",
            "--input",
            input.to_str().unwrap(),
            "--merges",
            "15",
            "--output",
            out.to_str().unwrap(),
        ]);
    }
    let text_a = std::fs::read(&out_a).unwrap();
    assert_eq!(text_a, std::fs::read(&out_b).unwrap(), "rerun must be byte-identical");

    let text = String::from_utf8(text_a).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let count: usize = header.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert_eq!(count, lines.count());
    assert_eq!(count, 15);

    // zero merges -> header-only model file
    let empty = dir.path().join("empty.bpe");
    run_ok(&[
        "learn-bpe",
        "--input",
        input.to_str().unwrap(),
        "--merges",
        "0",
        "--output",
        empty.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&empty).unwrap();
    assert_eq!(text.trim(), "@@ 0");
}

fn write_run_config(dir: &Path, strategy: &str, extra_model: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    let text = format!(
        r#"
out_dir = "out"
bpe_model = "toy.bpe"

[model]
num_layers = 1
d_m = 32
d_h = 64
heads = 4
p_drop = 0.0
{extra_model}

[sharing]
strategy = "{strategy}"

[training]
seed = 3
warmup = 400
token_budget = 400
max_steps = 400
eval_interval = 200
beam_width = 2
stop_train_accuracy = 0.995

[[pair]]
lang = "cp"
train_src = "train.src.cp"
train_tgt = "train.cp"
dev_src = "dev.src.cp"
dev_tgt = "dev.cp"

[[pair]]
lang = "rev"
train_src = "train.src.rev"
train_tgt = "train.rev"
dev_src = "dev.src.rev"
dev_tgt = "dev.rev"
"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn full_pipeline_trains_translates_and_scores() {
    let dir = tempfile::tempdir().unwrap();
    gen_toy(dir.path(), &["cp=copy", "rev=reverse"], 32, 8);
    run_ok(&[
        "learn-bpe",
        "--input",
        dir.path().join("train.src.cp").to_str().unwrap(),
        dir.path().join("train.cp").to_str().unwrap(),
        dir.path().join("train.src.rev").to_str().unwrap(),
        dir.path().join("train.rev").to_str().unwrap(),
        "--merges",
        "40",
        "--output",
        dir.path().join("toy.bpe").to_str().unwrap(),
    ]);
    let cfg = write_run_config(dir.path(), "KQ_BOTH", "");
    let stdout = run_ok(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(stdout.contains("KQ_BOTH"), "train banner: {stdout}");

    let out = dir.path().join("out");
    for artifact in ["vocab.txt", "config.resolved.toml", "metrics.csv", "best.ckpt", "last.ckpt"] {
        assert!(out.join(artifact).exists(), "missing {artifact}");
    }
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let header = metrics.lines().next().unwrap();
    assert_eq!(header, "step,lr,train_loss,dev_bleu_cp,dev_bleu_rev,tokens_per_sec");
    let resolved = std::fs::read_to_string(out.join("config.resolved.toml")).unwrap();
    assert!(resolved.contains("vocab_size"), "resolved config records the derived vocabulary size");

    // translate: one output line per input line, beam 1 deterministic
    let input = dir.path().join("train.src.cp");
    let hyp1 = dir.path().join("hyp1.txt");
    let hyp2 = dir.path().join("hyp2.txt");
    for hyp in [&hyp1, &hyp2] {
        run_ok(&[
            "translate",
            "--checkpoint",
            out.join("last.ckpt").to_str().unwrap(),
            "--input",
            input.to_str().unwrap(),
            "--lang",
            "cp",
            "--vocab",
            out.join("vocab.txt").to_str().unwrap(),
            "--bpe",
            dir.path().join("toy.bpe").to_str().unwrap(),
            "--beam",
            "1",
            "--output",
            hyp.to_str().unwrap(),
        ]);
    }
    assert_eq!(std::fs::read(&hyp1).unwrap(), std::fs::read(&hyp2).unwrap());
    let n_in = std::fs::read_to_string(&input).unwrap().lines().count();
    let n_out = std::fs::read_to_string(&hyp1).unwrap().lines().count();
    assert_eq!(n_in, n_out);

    // unknown language -> plan error, nonzero exit
    let err = run_err(&[
        "translate",
        "--checkpoint",
        out.join("last.ckpt").to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
        "--lang",
        "fr",
        "--vocab",
        out.join("vocab.txt").to_str().unwrap(),
        "--bpe",
        dir.path().join("toy.bpe").to_str().unwrap(),
    ]);
    assert!(err.contains("fr"), "diagnostic names the language: {err}");

    // scoring: identity = 100, markers-joined hypothesis file scores > 0
    let refs = dir.path().join("train.cp");
    let stdout = run_ok(&[
        "score",
        "--hyp",
        refs.to_str().unwrap(),
        "--ref",
        refs.to_str().unwrap(),
    ]);
    assert!(stdout.contains("BLEU = 100.00"), "identity BLEU: {stdout}");

    let fm_csv = dir.path().join("fm.csv");
    run_ok(&[
        "score",
        "--hyp",
        hyp1.to_str().unwrap(),
        "--ref",
        refs.to_str().unwrap(),
        "--fmeasure",
        "--train-corpus",
        refs.to_str().unwrap(),
        "--fmeasure-csv",
        fm_csv.to_str().unwrap(),
    ]);
    let csv = std::fs::read_to_string(&fm_csv).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "bucket_low,bucket_high,match,hyp_count,ref_count,f");
    assert_eq!(lines.count(), 6, "six frequency buckets");

    // line-count mismatch is an alignment error
    let short = dir.path().join("short.txt");
    std::fs::write(&short, "ant bee\n").unwrap();
    run_err(&[
        "score",
        "--hyp",
        short.to_str().unwrap(),
        "--ref",
        refs.to_str().unwrap(),
    ]);
}

#[test]
fn config_errors_abort_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    gen_toy(dir.path(), &["cp=copy", "rev=reverse"], 8, 0);

    // unknown strategy name
    let cfg = write_run_config(dir.path(), "DIAGONAL", "");
    let err = run_err(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(err.contains("DIAGONAL"), "diagnostic names the strategy: {err}");

    // unknown config key
    let cfg = write_run_config(dir.path(), "FULL", "embedding_scale = 2.0");
    let err = run_err(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(err.contains("parse"), "diagnostic mentions parsing: {err}");

    // no training output directory appears in either case
    assert!(!dir.path().join("out").exists());
}

#[test]
fn count_params_reproduces_the_size_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("base.cfg");
    std::fs::write(
        &cfg,
        r#"
out_dir = "unused"

[model]

[[pair]]
lang = "de"
train_src = "x"
train_tgt = "y"

[[pair]]
lang = "nl"
train_src = "x"
train_tgt = "z"
"#,
    )
    .unwrap();
    let stdout = run_ok(&["count-params", "--config", cfg.to_str().unwrap(), "--strategy", "all"]);
    let mut weights_m = std::collections::HashMap::new();
    for line in stdout.lines().skip(1) {
        let cols: Vec<&str> = line.split_whitespace().collect();
        weights_m.insert(cols[0].to_string(), cols[3].parse::<u64>().unwrap());
    }
    for (strategy, want) in [
        ("NONE", 122),
        ("EMBED", 105),
        ("EMBED_ENC", 86),
        ("FFN", 74),
        ("SELF_ATTN", 80),
        ("ENCDEC_ATTN", 80),
        ("KV_BOTH", 80),
        ("KQ_BOTH", 80),
        ("ATTN_BOTH", 74),
        ("FULL", 61),
    ] {
        assert_eq!(weights_m[strategy], want, "{strategy}");
    }

    // single strategy prints one row; bad names fail
    let stdout =
        run_ok(&["count-params", "--config", cfg.to_str().unwrap(), "--strategy", "FULL"]);
    assert_eq!(stdout.lines().count(), 2);
    run_err(&["count-params", "--config", cfg.to_str().unwrap(), "--strategy", "BOGUS"]);
}
