use std::path::Path;

use proptest::prelude::*;

use tbert::pipeline::{run_pipeline, select_cutoff, sweep_k, PipelineConfig, ARTIFACTS};
use tbert::synth::{generate, write_fixture, SynthConfig};

fn small_config(fixture: &Path, out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default().with_k(4);
    cfg.lda.iterations = 150;
    cfg.lda.burn_in = 50;
    cfg.autoencoder.epochs = 5;
    cfg.autoencoder.latent_dim = 16;
    cfg.kmeans.n_init = 2;
    cfg.paths.corpus = Some(fixture.join("corpus.csv"));
    cfg.paths.embeddings = Some(fixture.join("embeddings.tbem"));
    cfg.paths.labels = Some(fixture.join("labels.csv"));
    cfg.paths.out_dir = out.to_path_buf();
    cfg
}

fn fixture(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("fixture");
    let synth = generate(&SynthConfig {
        n_docs: 160,
        n_topics: 4,
        embedding_dim: 24,
        ..SynthConfig::default()
    })
    .unwrap();
    write_fixture(&path, &synth).unwrap();
    path
}

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&fixture(dir.path()), &dir.path().join("out"));
    let summary = run_pipeline(&cfg).unwrap();
    for a in ARTIFACTS {
        assert!(cfg.paths.out_dir.join(a).is_file(), "{a} missing");
    }
    assert_eq!(summary.artifacts.len(), ARTIFACTS.len());

    for c in &summary.output.join.clusters {
        let f = c.fractions;
        assert!((f.positive + f.negative + f.neutral - 1.0).abs() < 1e-12);
    }
    let csv = std::fs::read_to_string(cfg.paths.out_dir.join("sentiment.csv")).unwrap();
    assert!(csv.starts_with("id,cluster,sentiment,p_positive,p_negative,p_neutral\n"));
    assert_eq!(csv.lines().count(), summary.output.prepared.ids.len() + 1);
}

#[test]
fn report_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&fixture(dir.path()), &dir.path().join("out"));
    run_pipeline(&cfg).unwrap();
    let read = |name: &str| std::fs::read(cfg.paths.out_dir.join(name)).unwrap();
    let first: Vec<Vec<u8>> = ARTIFACTS.iter().map(|a| read(a)).collect();

    let report: serde_json::Value = serde_json::from_slice(&read("report.json")).unwrap();
    let echoed: PipelineConfig = serde_json::from_value(report["config"].clone()).unwrap();
    assert_eq!(echoed, cfg);
    run_pipeline(&echoed).unwrap();
    let second: Vec<Vec<u8>> = ARTIFACTS.iter().map(|a| read(a)).collect();
    assert_eq!(first, second);
}

#[test]
fn missing_embeddings_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(&fixture(dir.path()), &dir.path().join("out"));
    cfg.paths.embeddings = Some(dir.path().join("nope.tbem"));
    let err = run_pipeline(&cfg).unwrap_err();
    assert_eq!(err.stage(), Some("embeddings"));
    assert!(err.to_string().contains("embeddings"), "{err}");
}

#[test]
fn embeddings_missing_a_document_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture(dir.path());
    let mut emb = tbert::embeddings::load_embeddings(&fx.join("embeddings.tbem")).unwrap();
    let keep: Vec<String> = emb.ids()[1..].to_vec();
    emb = emb.select(&keep).unwrap();
    tbert::embeddings::write_tbem(&fx.join("embeddings.tbem"), &emb).unwrap();
    let err = run_pipeline(&small_config(&fx, &dir.path().join("out"))).unwrap_err();
    assert_eq!(err.stage(), Some("embeddings"));
    assert!(err.to_string().contains("doc0000"), "{err}");
}

#[test]
fn failed_writes_leave_no_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    std::fs::create_dir_all(out.join("sentiment.csv")).unwrap();
    let err = run_pipeline(&small_config(&fixture(dir.path()), &out)).unwrap_err();
    assert_eq!(err.stage(), Some("write"));
    for a in ARTIFACTS.iter().filter(|&&a| a != "sentiment.csv") {
        assert!(!out.join(a).exists(), "{a} left behind");
    }
}

#[test]
fn sweep_reports_every_k() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(&fixture(dir.path()), &dir.path().join("out"));
    cfg.k_sweep = vec![4, 2, 3, 200];
    let report = sweep_k(&cfg).unwrap();
    let ks: Vec<usize> = report.entries.iter().map(|e| e.k).collect();
    assert_eq!(ks, [2, 3, 4, 200]);
    assert!(report.entries[3].error.is_some());
    assert!(report.entries[..3].iter().all(|e| e.error.is_none() && e.fused_cv.is_some()));
    assert!(matches!(report.selected_k, Some(2..=4)));
    assert!(cfg.paths.out_dir.join("sweep.json").is_file());
    let csv = std::fs::read_to_string(cfg.paths.out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

proptest! {
    #[test]
    fn cutoff_ignores_larger_k_after_an_interior_maximum(
        scores in prop::collection::vec(0.0f64..1.0, 3..10),
        extra in prop::collection::vec(0.0f64..1.0, 1..5),
    ) {
        let grid: Vec<(usize, f64)> = scores.iter().enumerate().map(|(i, &s)| (i + 1, s)).collect();
        let picked = select_cutoff(&grid).unwrap();
        prop_assume!(picked < grid.len());
        let mut longer = grid.clone();
        longer.extend(extra.iter().enumerate().map(|(i, &s)| (grid.len() + 1 + i, s)));
        prop_assert_eq!(select_cutoff(&longer), Some(picked));
        prop_assert!(grid.iter().any(|&(k, _)| k == picked));
    }
}
