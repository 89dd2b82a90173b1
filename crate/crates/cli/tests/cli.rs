use std::path::Path;
use std::process::{Command, Output};

const ARTIFACTS: [&str; 6] = [
    "topics.json",
    "assignments.csv",
    "wordcloud_freqs.json",
    "metrics.json",
    "sentiment.csv",
    "report.json",
];

fn tbert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tbert"))
        .args(args)
        .env_remove("TBERT_EMBED_ENDPOINT")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = tbert(args);
    assert!(
        out.status.success(),
        "tbert {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn ok_in(out: &Path, args: &[&str]) -> String {
    ok(&[args, &["--out", s(out)]].concat())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path) -> std::path::PathBuf {
    let fx = dir.join("fx");
    ok(&["synth", "--n-docs", "160", "--n-topics", "4", "--out", s(&fx)]);
    fx
}

#[test]
fn synth_then_run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let fx = synth(dir.path());
    for f in ["corpus.csv", "embeddings.tbem", "labels.csv", "planted.csv", "config.json"] {
        assert!(fx.join(f).is_file(), "{f}");
    }
    let config = fx.join("config.json");
    let out = dir.path().join("run");
    let stdout = ok(&["run", "--config", s(&config), "--out", s(&out), "--seed", "3"]);
    assert!(stdout.contains("fused C_V"));
    let first: Vec<Vec<u8>> = ARTIFACTS.iter().map(|a| std::fs::read(out.join(a)).unwrap()).collect();
    ok(&["run", "--config", s(&config), "--out", s(&out), "--seed", "3"]);
    let second: Vec<Vec<u8>> = ARTIFACTS.iter().map(|a| std::fs::read(out.join(a)).unwrap()).collect();
    assert_eq!(first, second);

    let report: serde_json::Value = serde_json::from_slice(&first[5]).unwrap();
    assert_eq!(report["config"]["lda"]["seed"], 3);
    assert_eq!(report["config"]["kmeans"]["k"], 4);
}

#[test]
fn missing_embeddings_fail_with_the_stage_name() {
    let dir = tempfile::tempdir().unwrap();
    let fx = synth(dir.path());
    let missing = dir.path().join("missing.tbem");
    let out = tbert(&[
        "run",
        "--config",
        s(&fx.join("config.json")),
        "--embeddings",
        s(&missing),
        "--out",
        s(&dir.path().join("run")),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("embeddings"), "{err}");
    assert!(!dir.path().join("run").join("topics.json").exists());
}

#[test]
fn stages_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let fx = synth(dir.path());
    let o = dir.path().join("stages");
    let p = |f: &str| o.join(f);

    ok_in(&o, &["preprocess", "--corpus", s(&fx.join("corpus.csv"))]);
    ok_in(&o, &["lda", "--processed", s(&p("processed.jsonl")), "--vocab", s(&p("vocabulary.json")), "--k", "4"]);
    let topics: Vec<Vec<String>> = serde_json::from_slice(&std::fs::read(p("lda_topics.json")).unwrap()).unwrap();
    assert_eq!(topics.len(), 4);

    ok_in(&o, &[
        "fuse",
        "--lda",
        s(&p("lda_model.json")),
        "--processed",
        s(&p("processed.jsonl")),
        "--embeddings",
        s(&fx.join("embeddings.tbem")),
    ]);
    assert!(p("fused.tbem.json").is_file());
    ok_in(&o, &["ae-train", "--fused", s(&p("fused.tbem")), "--epochs", "3", "--latent-dim", "16"]);
    assert!(std::fs::read_to_string(p("ae_loss.csv")).unwrap().lines().count() == 4);
    ok_in(&o, &[
        "cluster",
        "--latent",
        s(&p("latent.tbem")),
        "--k",
        "4",
        "--processed",
        s(&p("processed.jsonl")),
        "--vocab",
        s(&p("vocabulary.json")),
    ]);
    let clouds: serde_json::Value = serde_json::from_slice(&std::fs::read(p("wordcloud_freqs.json")).unwrap()).unwrap();
    assert_eq!(clouds.as_object().unwrap().len(), 4);

    let acc = ok_in(&o, &[
        "sentiment-train",
        "--embeddings",
        s(&fx.join("embeddings.tbem")),
        "--labels",
        s(&fx.join("labels.csv")),
    ]);
    assert!(acc.contains("training accuracy"));
    ok_in(&o, &[
        "sentiment-predict",
        "--model",
        s(&p("sentiment_model.json")),
        "--embeddings",
        s(&fx.join("embeddings.tbem")),
    ]);
    let preds = std::fs::read_to_string(p("predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 161);
}

#[test]
fn predict_report_join() {
    let dir = tempfile::tempdir().unwrap();
    let fx = synth(dir.path());
    let o = dir.path().join("j");
    ok(&["sentiment-train", "--embeddings", s(&fx.join("embeddings.tbem")), "--labels", s(&fx.join("labels.csv")), "--out", s(&o)]);
    ok(&["sentiment-predict", "--model", s(&o.join("sentiment_model.json")), "--embeddings", s(&fx.join("embeddings.tbem")), "--out", s(&o)]);
    let planted = std::fs::read_to_string(fx.join("planted.csv")).unwrap();
    let mut assignments = String::from("id,cluster\n");
    for line in planted.lines().skip(1) {
        let mut f = line.split(',');
        assignments += &format!("{},{}\n", f.next().unwrap(), f.next().unwrap());
    }
    std::fs::write(o.join("assignments.csv"), assignments).unwrap();
    let stdout = ok(&[
        "report",
        "--assignments",
        s(&o.join("assignments.csv")),
        "--predictions",
        s(&o.join("predictions.csv")),
        "--out",
        s(&o),
    ]);
    assert_eq!(stdout.lines().count(), 4);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(o.join("sentiment_report.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 160);
}

#[test]
fn sweep_over_a_short_grid() {
    let dir = tempfile::tempdir().unwrap();
    let fx = synth(dir.path());
    let o = dir.path().join("sweep");
    let stdout = ok(&["sweep", "--config", s(&fx.join("config.json")), "--k", "3,4,5", "--out", s(&o)]);
    assert!(stdout.contains("selected k ="), "{stdout}");
    assert!(o.join("sweep.json").is_file() && o.join("sweep.csv").is_file());
}

#[test]
fn embedding_conversion_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let fx = synth(dir.path());
    let jsonl = dir.path().join("e.jsonl");
    let back = dir.path().join("e.tbem");
    ok(&["embed-convert", "--input", s(&fx.join("embeddings.tbem")), "--output", s(&jsonl)]);
    ok(&["embed-convert", "--input", s(&jsonl), "--output", s(&back)]);
    assert_eq!(std::fs::read(&back).unwrap(), std::fs::read(fx.join("embeddings.tbem")).unwrap());
}

#[test]
fn embed_fetch_needs_an_endpoint() {
    let out = tbert(&["embed-fetch", "--corpus", "x.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--endpoint"));
}
