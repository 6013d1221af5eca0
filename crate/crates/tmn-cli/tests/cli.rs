//! End-to-end checks of the `tmn` binary: artifact shapes, exit codes,
//! settings precedence, and bit-exact reruns.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tmn::synth::{planted_topic_lines, SynthSpec};

fn tmn() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tmn"));
    cmd.env_remove("TMN_SEED");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("the binary should at least start")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "wrong exit code; stdout: {} stderr: {}",
        stdout(out),
        stderr(out)
    );
}

fn write_raw_corpus(dir: &Path) -> PathBuf {
    let spec = SynthSpec {
        topics: 3,
        words_per_topic: 8,
        docs: 90,
        min_len: 6,
        max_len: 9,
        dominant_share: 0.9,
        seed: 5,
    };
    let path = dir.join("raw.tsv");
    fs::write(&path, planted_topic_lines(&spec)).unwrap();
    path
}

fn prepare(dir: &Path, raw: &Path, out_name: &str) -> PathBuf {
    let out = dir.join(out_name);
    let result = run(tmn()
        .arg("prepare")
        .args(["--min-count", "1", "--seed", "7"])
        .arg("--input")
        .arg(raw)
        .arg("--out")
        .arg(&out));
    assert_exit(&result, 0);
    out
}

/// Small but non-degenerate knobs so each training run stays fast.
fn tiny_train_args(cmd: &mut Command) -> &mut Command {
    cmd.args([
        "--k",
        "3",
        "--hops",
        "1",
        "--e",
        "8",
        "--h-e",
        "10",
        "--cnn-features",
        "6",
        "--filter-widths",
        "1,2",
        "--epochs",
        "5",
        "--patience",
        "5",
        "--batch-size",
        "16",
        "--seed",
        "11",
    ])
}

fn train(dir: &Path, corpus: &Path, out_name: &str) -> PathBuf {
    let out = dir.join(out_name);
    let mut cmd = tmn();
    cmd.arg("train").arg("--corpus").arg(corpus).arg("--out").arg(&out);
    tiny_train_args(&mut cmd);
    let result = run(&mut cmd);
    assert_exit(&result, 0);
    out
}

#[test]
fn prepare_reports_the_corpus_shape() {
    let dir = tempfile::tempdir().unwrap();
    let raw = write_raw_corpus(dir.path());
    let out = dir.path().join("prep");
    let result = run(tmn()
        .arg("prepare")
        .args(["--min-count", "1", "--seed", "7"])
        .arg("--input")
        .arg(&raw)
        .arg("--out")
        .arg(&out));
    assert_exit(&result, 0);
    let text = stdout(&result);
    assert!(text.contains("# of labels: 3"), "summary missing labels: {text}");
    assert!(text.contains("# of docs: 90"), "summary missing docs: {text}");
    assert!(text.contains("Split sizes: train "), "summary missing split: {text}");
    for file in ["vocab.tsv", "seq_vocab.tsv", "docs.jsonl", "split.json", "labels.tsv", "meta.json"]
    {
        assert!(out.join(file).exists(), "missing artifact {file}");
    }
}

#[test]
fn prepare_is_bit_exact_across_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let raw = write_raw_corpus(dir.path());
    let a = prepare(dir.path(), &raw, "a");
    let b = prepare(dir.path(), &raw, "b");
    for file in ["vocab.tsv", "seq_vocab.tsv", "docs.jsonl", "split.json", "labels.tsv", "meta.json"]
    {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file} differs between identical runs"
        );
    }
}

#[test]
fn malformed_input_fails_with_the_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("broken.tsv");
    fs::write(&raw, "sports\tgood line\nno tab here\n").unwrap();
    let result = run(tmn()
        .arg("prepare")
        .arg("--input")
        .arg(&raw)
        .arg("--out")
        .arg(dir.path().join("x")));
    assert_exit(&result, 2);
    assert!(stderr(&result).contains("line 2"), "stderr: {}", stderr(&result));
}

#[test]
fn train_writes_checkpoint_log_and_topics() {
    let dir = tempfile::tempdir().unwrap();
    let raw = write_raw_corpus(dir.path());
    let prep = prepare(dir.path(), &raw, "prep");
    let out = train(dir.path(), &prep, "run");

    assert!(out.join("model.ckpt").exists());
    let log = fs::read_to_string(out.join("train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,ntm_loss,cls_loss,dev_acc\n"), "log header: {log}");
    assert!(log.lines().count() >= 2, "log has no epoch rows");
    let topics = fs::read_to_string(out.join("topics.txt")).unwrap();
    assert_eq!(topics.lines().count(), 3, "one line per topic");
    for (k, line) in topics.lines().enumerate() {
        let (id, words) = line.split_once('\t').expect("topic_id<TAB>words");
        assert_eq!(id, k.to_string());
        assert_eq!(words.split(' ').count(), 10, "ten words per topic");
    }
}

#[test]
fn train_is_bit_exact_across_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let raw = write_raw_corpus(dir.path());
    let prep = prepare(dir.path(), &raw, "prep");
    let a = train(dir.path(), &prep, "a");
    let b = train(dir.path(), &prep, "b");
    assert_eq!(
        fs::read(a.join("model.ckpt")).unwrap(),
        fs::read(b.join("model.ckpt")).unwrap(),
        "checkpoints differ between identical runs"
    );
    assert_eq!(
        fs::read(a.join("train_log.csv")).unwrap(),
        fs::read(b.join("train_log.csv")).unwrap()
    );
}

#[test]
fn diverging_training_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let raw = write_raw_corpus(dir.path());
    let prep = prepare(dir.path(), &raw, "prep");
    let mut cmd = tmn();
    cmd.arg("train").arg("--corpus").arg(&prep).arg("--out").arg(dir.path().join("dv"));
    tiny_train_args(&mut cmd);
    cmd.args(["--learning-rate", "1e120"]);
    let result = run(&mut cmd);
    assert_exit(&result, 3);
    assert!(stderr(&result).contains("diverged"), "stderr: {}", stderr(&result));
}

#[test]
fn eval_writes_metrics_and_coherence() {
    let dir = tempfile::tempdir().unwrap();
    let raw = write_raw_corpus(dir.path());
    let prep = prepare(dir.path(), &raw, "prep");
    let run_dir = train(dir.path(), &prep, "run");
    let out = dir.path().join("evalout");
    let result = run(tmn()
        .arg("eval")
        .arg("--checkpoint")
        .arg(run_dir.join("model.ckpt"))
        .arg("--corpus")
        .arg(&prep)
        .arg("--out")
        .arg(&out)
        .args(["--split", "test"]));
    assert_exit(&result, 0);

    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["split"], "test");
    let accuracy = metrics["model"]["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&accuracy));
    assert!(metrics["baseline"]["accuracy"].as_f64().is_some());
    assert_eq!(metrics["model"]["confusion"].as_array().unwrap().len(), 3);
    assert!(metrics["mean_npmi"].as_f64().unwrap().abs() <= 1.0);

    let coherence = fs::read_to_string(out.join("coherence.tsv")).unwrap();
    assert!(coherence.starts_with("topic_id\tnpmi\ttop_words\n"));
    assert_eq!(coherence.lines().count(), 4, "header plus one row per topic");
}

#[test]
fn eval_rejects_a_mismatched_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let raw = write_raw_corpus(dir.path());
    let prep = prepare(dir.path(), &raw, "prep");
    let run_dir = train(dir.path(), &prep, "run");

    let stops = dir.path().join("stops.txt");
    fs::write(&stops, "t0w0\n").unwrap();
    let other = dir.path().join("other");
    let result = run(tmn()
        .arg("prepare")
        .args(["--min-count", "1", "--seed", "7"])
        .arg("--stopwords")
        .arg(&stops)
        .arg("--input")
        .arg(&raw)
        .arg("--out")
        .arg(&other));
    assert_exit(&result, 0);

    let result = run(tmn()
        .arg("eval")
        .arg("--checkpoint")
        .arg(run_dir.join("model.ckpt"))
        .arg("--corpus")
        .arg(&other)
        .arg("--out")
        .arg(dir.path().join("x")));
    assert_exit(&result, 4);
}

#[test]
fn eval_rejects_an_unknown_split_name() {
    let dir = tempfile::tempdir().unwrap();
    let raw = write_raw_corpus(dir.path());
    let prep = prepare(dir.path(), &raw, "prep");
    let run_dir = train(dir.path(), &prep, "run");
    let result = run(tmn()
        .arg("eval")
        .arg("--checkpoint")
        .arg(run_dir.join("model.ckpt"))
        .arg("--corpus")
        .arg(&prep)
        .arg("--out")
        .arg(dir.path().join("x"))
        .args(["--split", "validation"]));
    assert_exit(&result, 2);
}

#[test]
fn topics_lists_and_draws_one_document() {
    let dir = tempfile::tempdir().unwrap();
    let raw = write_raw_corpus(dir.path());
    let prep = prepare(dir.path(), &raw, "prep");
    let run_dir = train(dir.path(), &prep, "run");
    let out = dir.path().join("insp");
    let result = run(tmn()
        .arg("topics")
        .arg("--checkpoint")
        .arg(run_dir.join("model.ckpt"))
        .arg("--out")
        .arg(&out)
        .args(["--inspect", "0"])
        .arg("--corpus")
        .arg(&prep));
    assert_exit(&result, 0);

    assert_eq!(fs::read_to_string(out.join("topics.txt")).unwrap().lines().count(), 3);
    let heatmap = fs::read_to_string(out.join("heatmap_doc0.tsv")).unwrap();
    let lines: Vec<&str> = heatmap.lines().collect();
    assert_eq!(lines[0], "# theta");
    assert_eq!(lines[2].split('\t').count(), 4, "theta row: label plus one value per topic");
    assert_eq!(lines[3], "# P");
    assert_eq!(lines.len(), 4 + 1 + 3, "two headers, labels, theta row, K match rows");
}

#[test]
fn inspecting_a_document_out_of_range_exits_five() {
    let dir = tempfile::tempdir().unwrap();
    let raw = write_raw_corpus(dir.path());
    let prep = prepare(dir.path(), &raw, "prep");
    let run_dir = train(dir.path(), &prep, "run");
    let result = run(tmn()
        .arg("topics")
        .arg("--checkpoint")
        .arg(run_dir.join("model.ckpt"))
        .arg("--out")
        .arg(dir.path().join("x"))
        .args(["--inspect", "100000"])
        .arg("--corpus")
        .arg(&prep));
    assert_exit(&result, 5);
}

#[test]
fn the_mixture_only_head_cannot_be_inspected() {
    let dir = tempfile::tempdir().unwrap();
    let raw = write_raw_corpus(dir.path());
    let prep = prepare(dir.path(), &raw, "prep");
    let out = dir.path().join("tc");
    let mut cmd = tmn();
    cmd.arg("train").arg("--corpus").arg(&prep).arg("--out").arg(&out);
    tiny_train_args(&mut cmd);
    cmd.args(["--arch", "theta_concat"]);
    assert_exit(&run(&mut cmd), 0);

    let result = run(tmn()
        .arg("topics")
        .arg("--checkpoint")
        .arg(out.join("model.ckpt"))
        .arg("--out")
        .arg(dir.path().join("x"))
        .args(["--inspect", "0"])
        .arg("--corpus")
        .arg(&prep));
    assert_exit(&result, 2);
}

#[test]
fn classify_labels_text_and_files() {
    let dir = tempfile::tempdir().unwrap();
    let raw = write_raw_corpus(dir.path());
    let prep = prepare(dir.path(), &raw, "prep");
    let run_dir = train(dir.path(), &prep, "run");
    let ckpt = run_dir.join("model.ckpt");

    let result =
        run(tmn().arg("classify").arg("--checkpoint").arg(&ckpt).args(["--text", "t0w0 t0w1 t0w2"]));
    assert_exit(&result, 0);
    let label = stdout(&result);
    assert!(label.trim().starts_with("topic"), "prints a label name: {label}");

    let lines = dir.path().join("lines.txt");
    fs::write(&lines, "t1w0 t1w1 t1w2\n\nt2w0 t2w1\n").unwrap();
    let result = run(tmn()
        .arg("classify")
        .arg("--checkpoint")
        .arg(&ckpt)
        .arg("--input")
        .arg(&lines)
        .arg("--probs"));
    assert_exit(&result, 0);
    let body = stdout(&result);
    let rows: Vec<&str> = body.lines().collect();
    assert_eq!(rows.len(), 3, "one output line per input line: {body}");
    let (_, probs) = rows[0].split_once('\t').expect("label<TAB>probs");
    assert_eq!(probs.split(' ').count(), 3, "one probability per class");
    let (_, fallback_probs) = rows[1].split_once('\t').unwrap();
    assert_eq!(fallback_probs, "-", "empty text falls back without a distribution");
}

#[test]
fn classify_needs_exactly_one_input_source() {
    let dir = tempfile::tempdir().unwrap();
    let raw = write_raw_corpus(dir.path());
    let prep = prepare(dir.path(), &raw, "prep");
    let run_dir = train(dir.path(), &prep, "run");
    let ckpt = run_dir.join("model.ckpt");

    assert_exit(&run(tmn().arg("classify").arg("--checkpoint").arg(&ckpt)), 2);
    let lines = dir.path().join("lines.txt");
    fs::write(&lines, "x\n").unwrap();
    let result = run(tmn()
        .arg("classify")
        .arg("--checkpoint")
        .arg(&ckpt)
        .args(["--text", "x"])
        .arg("--input")
        .arg(&lines));
    assert_exit(&result, 2);
}

#[test]
fn a_garbage_checkpoint_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let fake = dir.path().join("model.ckpt");
    fs::write(&fake, "not a checkpoint\n").unwrap();
    let result = run(tmn().arg("classify").arg("--checkpoint").arg(&fake).args(["--text", "x"]));
    assert_exit(&result, 2);
}

#[test]
fn sweep_covers_the_grid_in_order_and_parallel_runs_match_serial() {
    let dir = tempfile::tempdir().unwrap();
    let raw = write_raw_corpus(dir.path());
    let prep = prepare(dir.path(), &raw, "prep");

    let mut outputs = Vec::new();
    for (name, workers) in [("serial", "1"), ("parallel", "3")] {
        let out = dir.path().join(name);
        let mut cmd = tmn();
        cmd.arg("sweep").arg("--corpus").arg(&prep).arg("--out").arg(&out);
        cmd.args(["--hops", "1,2", "--topics", "2,3", "--parallel", workers]);
        cmd.args([
            "--e",
            "8",
            "--h-e",
            "10",
            "--cnn-features",
            "6",
            "--filter-widths",
            "1,2",
            "--epochs",
            "3",
            "--patience",
            "3",
            "--batch-size",
            "16",
            "--seed",
            "11",
        ]);
        assert_exit(&run(&mut cmd), 0);
        outputs.push(fs::read_to_string(out.join("sweep.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "worker count changed the results");

    let lines: Vec<&str> = outputs[0].lines().collect();
    assert_eq!(lines[0], "hops,k,seed,status,best_epoch,dev_acc");
    let cells: Vec<Vec<&str>> = lines[1..].iter().map(|l| l.split(',').collect()).collect();
    assert_eq!(cells.len(), 4, "2x2 grid");
    let grid: Vec<(&str, &str)> = cells.iter().map(|row| (row[0], row[1])).collect();
    assert_eq!(grid, vec![("1", "2"), ("1", "3"), ("2", "2"), ("2", "3")]);
    for row in &cells {
        assert_eq!(row[3], "ok", "row: {row:?}");
    }
}

#[test]
fn settings_resolve_flag_over_config_over_env() {
    let dir = tempfile::tempdir().unwrap();
    let raw = write_raw_corpus(dir.path());
    let prep = prepare(dir.path(), &raw, "prep");
    let config = dir.path().join("run.cfg");
    fs::write(&config, "# fixture settings\nseed=9\n\nepochs=3\n").unwrap();

    let ckpt = |out: &Path| fs::read(out.join("model.ckpt")).unwrap();
    let base = |out: &Path| {
        let mut cmd = tmn();
        cmd.arg("train").arg("--corpus").arg(&prep).arg("--out").arg(out);
        cmd.args([
            "--k",
            "3",
            "--hops",
            "1",
            "--e",
            "8",
            "--h-e",
            "10",
            "--cnn-features",
            "6",
            "--filter-widths",
            "1,2",
            "--epochs",
            "3",
            "--patience",
            "3",
            "--batch-size",
            "16",
        ]);
        cmd
    };

    let seed9 = dir.path().join("seed9");
    assert_exit(&run(base(&seed9).args(["--seed", "9"])), 0);

    let env_only = dir.path().join("env_only");
    assert_exit(&run(base(&env_only).env("TMN_SEED", "9")), 0);
    assert_eq!(ckpt(&seed9), ckpt(&env_only), "TMN_SEED should act as the seed");

    let config_beats_env = dir.path().join("config_beats_env");
    assert_exit(
        &run(base(&config_beats_env).arg("--config").arg(&config).env("TMN_SEED", "5")),
        0,
    );
    assert_eq!(ckpt(&seed9), ckpt(&config_beats_env), "config seed=9 should beat TMN_SEED=5");

    let flag_beats_config = dir.path().join("flag_beats_config");
    assert_exit(
        &run(base(&flag_beats_config).arg("--config").arg(&config).args(["--seed", "11"])),
        0,
    );
    let plain11 = dir.path().join("plain11");
    assert_exit(&run(base(&plain11).args(["--seed", "11"])), 0);
    assert_eq!(ckpt(&plain11), ckpt(&flag_beats_config), "--seed 11 should beat config seed=9");
    assert_ne!(ckpt(&seed9), ckpt(&plain11), "different seeds should differ");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let raw = write_raw_corpus(dir.path());
    let prep = prepare(dir.path(), &raw, "prep");
    let config = dir.path().join("bad.cfg");
    fs::write(&config, "epohcs=5\n").unwrap();
    let mut cmd = tmn();
    cmd.arg("train")
        .arg("--corpus")
        .arg(&prep)
        .arg("--out")
        .arg(dir.path().join("x"))
        .arg("--config")
        .arg(&config);
    let result = run(&mut cmd);
    assert_exit(&result, 2);
    assert!(stderr(&result).contains("epohcs"), "stderr: {}", stderr(&result));
}

#[test]
fn a_bad_env_seed_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let raw = write_raw_corpus(dir.path());
    let result = run(tmn()
        .arg("prepare")
        .arg("--input")
        .arg(&raw)
        .arg("--out")
        .arg(dir.path().join("x"))
        .env("TMN_SEED", "not-a-number"));
    assert_exit(&result, 2);
}

#[test]
fn pretrained_embeddings_feed_training() {
    let dir = tempfile::tempdir().unwrap();
    let raw = write_raw_corpus(dir.path());
    let prep = prepare(dir.path(), &raw, "prep");

    let good = dir.path().join("vectors.txt");
    let row: Vec<String> = (0..8).map(|i| format!("0.{i}")).collect();
    fs::write(&good, format!("t0w0 {}\n", row.join(" "))).unwrap();
    let out = dir.path().join("with_vectors");
    let mut cmd = tmn();
    cmd.arg("train").arg("--corpus").arg(&prep).arg("--out").arg(&out);
    tiny_train_args(&mut cmd);
    cmd.arg("--embeddings").arg(&good);
    assert_exit(&run(&mut cmd), 0);

    let plain = train(dir.path(), &prep, "plain");
    assert_ne!(
        fs::read(out.join("model.ckpt")).unwrap(),
        fs::read(plain.join("model.ckpt")).unwrap(),
        "a known-word embedding should change the run"
    );

    let bad = dir.path().join("bad_vectors.txt");
    fs::write(&bad, "t0w0 0.1 not-a-number\n").unwrap();
    let mut cmd = tmn();
    cmd.arg("train").arg("--corpus").arg(&prep).arg("--out").arg(dir.path().join("y"));
    tiny_train_args(&mut cmd);
    cmd.arg("--embeddings").arg(&bad);
    assert_exit(&run(&mut cmd), 2);
}
