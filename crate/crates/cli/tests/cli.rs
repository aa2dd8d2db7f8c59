use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use dialogrl::corpus::{encode, Vocabulary, MAX_SEQ_LEN};
use dialogrl::model::{greedy_decode, load_checkpoint};
use dialogrl::synthetic::{affect_dialog_corpus, review_corpus};

const TINY: &str = "embed_dim = 11\nhidden_size = 8\nnum_layers = 1\nbatch_size = 8\nlearning_rate = 1.0\ndecay_rate = 0.0\nepochs = 3\nseed = 1\n";

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dialogrl"));
    c.env_remove("DIALOGRL_DATA_DIR").env("RUST_LOG", "warn");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .arg("--data-dir")
        .arg(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Writes a raw corpus and runs preprocess into `dir`.
fn prepared(dir: &Path) -> String {
    let raw = dir.join("raw.tsv");
    let lines: Vec<String> = affect_dialog_corpus(240, 0.3, 9)
        .iter()
        .map(|p| format!("{}\t{}", p.source, p.target))
        .collect();
    std::fs::write(&raw, lines.join("\n") + "\n").unwrap();
    std::fs::write(dir.join("tiny.cfg"), TINY).unwrap();
    ok(&run(dir, &["preprocess", "--input", raw.to_str().unwrap()]))
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn train(dir: &Path, mode: &str, out: &str, extra: &[&str]) -> Output {
    let cfg = p(dir, "tiny.cfg");
    let out = p(dir, out);
    let mut args = vec!["train", mode, "--config", &cfg, "--out", &out];
    args.extend_from_slice(extra);
    run(dir, &args)
}

#[test]
fn preprocess_writes_splits_vocab_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let stats = prepared(dir.path());
    for f in ["train.tsv", "valid.tsv", "test.tsv", "vocab.txt"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    assert!(stats.starts_with("split\tpairs"));
    assert!(stats.contains("\ntrain\t192\t"), "{stats}");
    assert!(stats.contains("vocabulary\t"));
    let help = ok(&bin().args(["preprocess", "--help"]).output().unwrap());
    assert!(help.contains("12000"));
}

#[test]
fn missing_input_is_an_io_failure_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &["preprocess", "--input", "/no/such/corpus.tsv"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("/no/such/corpus.tsv"));
}

#[test]
fn usage_and_config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        bin().arg("frobnicate").output().unwrap().status.code(),
        Some(1)
    );
    prepared(dir.path());
    std::fs::write(dir.path().join("bad.cfg"), "hidden_sise = 4\n").unwrap();
    let out = run(
        dir.path(),
        &["train", "mle", "--config", &p(dir.path(), "bad.cfg")],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unknown key `hidden_sise`"));
}

#[test]
fn mle_training_is_reproducible_and_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepared(d);
    ok(&train(d, "mle", "a.ckpt", &[]));
    ok(&train(d, "mle", "b.ckpt", &[]));
    let (a, b) = (
        std::fs::read(d.join("a.ckpt")).unwrap(),
        std::fs::read(d.join("b.ckpt")).unwrap(),
    );
    assert_eq!(a, b);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("a.ckpt.report.json")).unwrap())
            .unwrap();
    let losses: Vec<f64> = report["epochs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["loss"].as_f64().unwrap())
        .collect();
    assert_eq!(losses.len(), 3);
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("a.ckpt.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["config"]["hidden_size"], "8");
    let digest = manifest["inputs"][p(d, "train.tsv")].as_str().unwrap();
    assert_eq!(digest.len(), 64);
}

#[test]
fn rl_needs_an_analyzer_when_feedback_is_weighted() {
    let dir = tempfile::tempdir().unwrap();
    prepared(dir.path());
    let out = train(
        dir.path(),
        "rl",
        "rl.ckpt",
        &["--reward-weights", "0.25,0.25,0.25,0.25"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("analyzer required"));
    let out = train(dir.path(), "rl", "rl.ckpt", &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--forward"));
}

#[test]
fn full_pipeline_with_rl_generation_and_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepared(d);
    ok(&train(d, "mle", "fwd.ckpt", &[]));
    ok(&train(d, "reverse", "bwd.ckpt", &[]));
    ok(&train(d, "lm", "lm.ckpt", &[]));

    let reviews: Vec<String> = review_corpus(200, 0.1, 3)
        .iter()
        .map(|r| {
            format!(
                "{}\t{}",
                r.useful_raw.map_or(String::new(), |v| v.to_string()),
                r.text
            )
        })
        .collect();
    std::fs::write(d.join("reviews.tsv"), reviews.join("\n") + "\n").unwrap();
    let summary = ok(&run(d, &["train-analyzer"]));
    assert!(summary.contains("class balance"));
    let acc: f64 = summary
        .lines()
        .find_map(|l| l.strip_prefix("held-out accuracy: "))
        .and_then(|l| l.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(acc >= 0.9, "{summary}");

    let (fwd, bwd, lm, anz) = (
        p(d, "fwd.ckpt"),
        p(d, "bwd.ckpt"),
        p(d, "lm.ckpt"),
        p(d, "analyzer.bin"),
    );
    let rl_args = [
        "--forward",
        &fwd,
        "--reverse",
        &bwd,
        "--lm",
        &lm,
        "--analyzer",
        &anz,
        "--epochs",
        "1",
    ];
    ok(&train(
        d,
        "rl",
        "rl.ckpt",
        &[&rl_args[..], &["--reward-weights", "0.25,0.25,0.25,0.25"]].concat(),
    ));
    let report = std::fs::read_to_string(d.join("rl.ckpt.report.json")).unwrap();
    assert!(report.contains("mean_reward"));

    let prompts = "i love the sunny beach\nthe storm ruined everything\nqwerty zxcv\n";
    std::fs::write(d.join("prompts.txt"), prompts).unwrap();
    let greedy = ok(&run(
        d,
        &[
            "generate",
            "--checkpoint",
            &p(d, "rl.ckpt"),
            "--prompts",
            &p(d, "prompts.txt"),
        ],
    ));
    let vocab = Vocabulary::load(d.join("vocab.txt")).unwrap();
    let model = load_checkpoint(d.join("rl.ckpt"), None).unwrap();
    let want: Vec<String> = prompts
        .lines()
        .map(|l| vocab.decode(&greedy_decode(&model, &encode(l, &vocab, MAX_SEQ_LEN)).unwrap()))
        .collect();
    assert_eq!(greedy.lines().collect::<Vec<_>>(), want);

    let beam = ok(&run(
        d,
        &[
            "generate",
            "--checkpoint",
            &fwd,
            "--prompts",
            &p(d, "prompts.txt"),
            "--n-best",
            "4",
        ],
    ));
    let mmi0 = ok(&run(
        d,
        &[
            "generate",
            "--checkpoint",
            &fwd,
            "--prompts",
            &p(d, "prompts.txt"),
            "--n-best",
            "4",
            "--lm",
            &lm,
            "--mmi-lambda",
            "0",
        ],
    ));
    assert_eq!(beam, mmi0);

    let sample = |seed: &str| {
        ok(&run(
            d,
            &[
                "generate",
                "--checkpoint",
                &fwd,
                "--prompts",
                &p(d, "prompts.txt"),
                "--sample",
                "--seed",
                seed,
            ],
        ))
    };
    assert_eq!(sample("5"), sample("5"));

    let mut child = bin()
        .arg("--data-dir")
        .arg(d)
        .args([
            "generate",
            "--checkpoint",
            &fwd,
            "--n-best",
            "3",
            "--lm",
            &lm,
            "--verbose",
        ])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"qwerty zxcv\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(ok(&out).lines().count(), 1);
    let err = stderr(&out);
    assert!(err.contains("no in-vocabulary words"), "{err}");
    assert!(err.contains("mmi"), "{err}");

    let rows: Vec<String> = prompts
        .lines()
        .zip(greedy.lines())
        .map(|(prompt, resp)| format!("{prompt}\t{resp}\t{prompt}"))
        .collect();
    std::fs::write(d.join("outputs.tsv"), rows.join("\n") + "\n").unwrap();
    let eval = ok(&run(
        d,
        &[
            "evaluate",
            "--outputs",
            &p(d, "outputs.tsv"),
            "--checkpoint",
            &fwd,
            "--vocab",
            &p(d, "vocab.txt"),
        ],
    ));
    assert!(eval.contains("perplexity\t"), "{eval}");
}

#[test]
fn evaluate_identity_self_baseline_and_misalignment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("out.tsv"),
        "hi\tthe cat sat on the mat\tthe cat sat on the mat\nyo\ta b c d\ta b c d\n",
    )
    .unwrap();
    std::fs::write(d.join("base.tsv"), "hi\tthe dog\tthe cat sat on the mat\n").unwrap();
    let report = ok(&run(d, &["evaluate", "--outputs", &p(d, "out.tsv")]));
    assert!(report.contains("BLEU\t1.0000"), "{report}");
    assert!(report.contains("ROUGE-L\t1.0000"), "{report}");

    let report = ok(&run(
        d,
        &[
            "evaluate",
            "--outputs",
            &p(d, "out.tsv"),
            "--baseline",
            &p(d, "out.tsv"),
        ],
    ));
    let p_value: f64 = report
        .lines()
        .nth(1)
        .unwrap()
        .split('\t')
        .nth(3)
        .unwrap()
        .parse()
        .unwrap();
    assert!(p_value >= 0.99, "{report}");

    let out = run(
        d,
        &[
            "evaluate",
            "--outputs",
            &p(d, "out.tsv"),
            "--baseline",
            &p(d, "base.tsv"),
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(
        err.contains("has 2 lines") && err.contains("has 1"),
        "{err}"
    );
}

#[test]
fn analyzer_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("unrated.tsv"), "\tgreat food\n\tawful\n").unwrap();
    let out = run(d, &["train-analyzer", "--reviews", &p(d, "unrated.tsv")]);
    assert_eq!(out.status.code(), Some(1));

    let reviews: Vec<String> = review_corpus(60, 0.0, 1)
        .iter()
        .map(|r| format!("{}\t{}", r.useful_raw.unwrap(), r.text))
        .collect();
    std::fs::write(d.join("reviews.tsv"), reviews.join("\n")).unwrap();
    let unwritable: PathBuf = d.join("no/such/dir/analyzer.bin");
    let out = run(
        d,
        &["train-analyzer", "--out", unwritable.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn data_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("DIALOGRL_DATA_DIR", dir.path())
        .args(["train", "mle"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains(&p(dir.path(), "vocab.txt")));
}
