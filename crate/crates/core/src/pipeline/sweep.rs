use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{prepare, run_topics, PipelineConfig};
use crate::corpus::{read_documents, RawDocument};
use crate::embeddings::{load_embeddings, EmbeddingMatrix};
use crate::{Error, Result};

pub const CUTOFF_RULE: &str = "first k whose successor does not raise fused C_V; largest k otherwise";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub k: usize,
    pub lda_cv: Option<f64>,
    pub fused_cv: Option<f64>,
    pub lda_umass: Option<f64>,
    pub fused_umass: Option<f64>,
    pub silhouette_fused_latent: Option<f64>,
    pub silhouette_raw_embedding: Option<f64>,
    /// Set when this k failed; the entry then takes no part in selection.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    pub selected_k: Option<usize>,
    pub rule: String,
}

/// Picks the first k whose successor's score is not higher. `scores` is
/// `(k, score)`; non-finite scores are skipped.
pub fn select_cutoff(scores: &[(usize, f64)]) -> Option<usize> {
    let mut s: Vec<(usize, f64)> = scores.iter().copied().filter(|(_, v)| v.is_finite()).collect();
    s.sort_by_key(|&(k, _)| k);
    s.windows(2)
        .find(|w| w[1].1 <= w[0].1)
        .map(|w| w[0].0)
        .or_else(|| s.last().map(|&(k, _)| k))
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Runs the topic half of the pipeline for each k in `config.k_sweep`.
pub fn sweep_in_memory(docs: &[RawDocument], embeddings: &EmbeddingMatrix, config: &PipelineConfig) -> Result<SweepReport> {
    if config.k_sweep.is_empty() {
        return Err(Error::InvalidParameter("k_sweep is empty".into()));
    }
    let prep = prepare(docs, embeddings, config)?;
    let mut ks = config.k_sweep.clone();
    ks.sort_unstable();
    ks.dedup();
    let entries: Vec<SweepEntry> = ks
        .into_iter()
        .map(|k| {
            let cfg = config.clone().with_k(k);
            match cfg.validate().and_then(|_| run_topics(&prep, &cfg)) {
                Ok(run) => {
                    let m = &run.metrics;
                    log::info!("k={k}: fused C_V {:.4}, LDA C_V {:.4}", m.fused.cv_mean, m.lda.cv_mean);
                    SweepEntry {
                        k,
                        lda_cv: finite(m.lda.cv_mean),
                        fused_cv: finite(m.fused.cv_mean),
                        lda_umass: finite(m.lda.umass_mean),
                        fused_umass: finite(m.fused.umass_mean),
                        silhouette_fused_latent: m.silhouette_fused_latent,
                        silhouette_raw_embedding: m.silhouette_raw_embedding,
                        error: None,
                    }
                }
                Err(e) => {
                    log::warn!("k={k} failed: {e}");
                    SweepEntry {
                        k,
                        lda_cv: None,
                        fused_cv: None,
                        lda_umass: None,
                        fused_umass: None,
                        silhouette_fused_latent: None,
                        silhouette_raw_embedding: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let scores: Vec<(usize, f64)> = entries.iter().filter_map(|e| e.fused_cv.map(|v| (e.k, v))).collect();
    Ok(SweepReport {
        selected_k: select_cutoff(&scores),
        entries,
        rule: CUTOFF_RULE.to_owned(),
    })
}

/// Writes `sweep.json` and `sweep.csv` into `dir`.
pub fn write_sweep(dir: &Path, report: &SweepReport) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::from(e).at_path(dir))?;
    let json = dir.join("sweep.json");
    std::fs::write(&json, serde_json::to_string_pretty(report)? + "\n").map_err(|e| Error::from(e).at_path(&json))?;
    let csv_path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::from(e).at_path(&csv_path))?;
    w.write_record(["k", "lda_cv", "fused_cv", "lda_umass", "fused_umass", "silhouette", "raw_silhouette", "selected"])?;
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.17e}")).unwrap_or_default();
    for e in &report.entries {
        w.write_record([
            e.k.to_string(),
            opt(e.lda_cv),
            opt(e.fused_cv),
            opt(e.lda_umass),
            opt(e.fused_umass),
            opt(e.silhouette_fused_latent),
            opt(e.silhouette_raw_embedding),
            (report.selected_k == Some(e.k)).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(vec![json, csv_path])
}

/// File-based sweep: reads corpus and embeddings from `config.paths` and
/// writes the report into `config.paths.out_dir`.
pub fn sweep_k(config: &PipelineConfig) -> Result<SweepReport> {
    let need = |p: &Option<PathBuf>, what: &str| {
        p.clone()
            .ok_or_else(|| Error::InvalidParameter(format!("paths.{what} is not set")))
    };
    let docs = need(&config.paths.corpus, "corpus")
        .and_then(|p| read_documents(&p))
        .map_err(|e| e.in_stage("preprocess"))?;
    let emb = need(&config.paths.embeddings, "embeddings")
        .and_then(|p| load_embeddings(&p))
        .map_err(|e| e.in_stage("embeddings"))?;
    let report = sweep_in_memory(&docs, &emb, config)?;
    write_sweep(&config.paths.out_dir, &report).map_err(|e| e.in_stage("write"))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_examples() {
        assert_eq!(select_cutoff(&[(5, 0.3), (6, 0.4), (7, 0.35)]), Some(6));
        assert_eq!(select_cutoff(&[(5, 0.3), (6, 0.4), (7, 0.5)]), Some(7));
        assert_eq!(select_cutoff(&[(7, 0.35), (5, 0.3), (6, 0.4)]), Some(6));
        assert_eq!(select_cutoff(&[(5, 0.3), (6, 0.3)]), Some(5));
        assert_eq!(select_cutoff(&[(5, 0.3), (6, f64::NAN), (7, 0.2)]), Some(5));
        assert_eq!(select_cutoff(&[]), None);
    }
}
