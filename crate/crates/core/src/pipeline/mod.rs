//! End-to-end orchestration: preprocess → LDA → embeddings → fuse →
//! autoencoder → K-Means → metrics → sentiment → join, plus the k sweep.
//!
//! [`run_pipeline`] writes six artifacts into the output directory:
//! `topics.json`, `assignments.csv`, `wordcloud_freqs.json`, `metrics.json`,
//! `sentiment.csv` and `report.json`. The report echoes the full effective
//! configuration, so feeding its `config` section back in reproduces the run.

mod config;
mod join;
mod sweep;

pub use config::{MetricsConfig, PathsConfig, PipelineConfig, PreprocessConfig, K_GRID};
pub use join::{join_topics_sentiments, ClusterSentiment, JoinReport, JoinedRow, SentimentShares};
pub use sweep::{select_cutoff, sweep_in_memory, sweep_k, write_sweep, SweepEntry, SweepReport, CUTOFF_RULE};

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use serde::Serialize;

use crate::autoencoder::{train_autoencoder, AeModel};
use crate::clustering::{cluster_top_term_ids, kmeans, write_assignments_csv, ClusterModel, TermCount};
use crate::corpus::{build_vocabulary, preprocess_corpus, read_documents, BowCorpus, RawDocument};
use crate::embeddings::{load_embeddings, EmbeddingMatrix};
use crate::fusion::{fuse_embeddings, FusedMatrix};
use crate::lda::{train_lda, LdaModel};
use crate::metrics::{cv_coherence, silhouette, umass_coherence, CooccurrenceStats};
use crate::sentiment::{
    evaluate, predict, read_label_map, read_labels_csv, train_classifier, Evaluation, LabeledSet, Prediction,
    Sentiment, SentimentModel,
};
use crate::{Error, Result};

/// Everything the pipeline reads from disk.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub docs: Vec<RawDocument>,
    pub embeddings: EmbeddingMatrix,
    pub labels: Option<Vec<(String, Sentiment)>>,
    pub sentiment_model: Option<SentimentModel>,
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::InvalidParameter(format!("paths.{what} is not set")))
}

pub fn load_inputs(config: &PipelineConfig) -> Result<Inputs> {
    let paths = &config.paths;
    let docs = required(&paths.corpus, "corpus")
        .and_then(read_documents)
        .map_err(|e| e.in_stage("preprocess"))?;
    let embeddings = required(&paths.embeddings, "embeddings")
        .and_then(load_embeddings)
        .map_err(|e| e.in_stage("embeddings"))?;
    let sentiment = || -> Result<(Option<Vec<(String, Sentiment)>>, Option<SentimentModel>)> {
        if let Some(p) = &paths.sentiment_model {
            let text = std::fs::read_to_string(p).map_err(|e| Error::from(e).at_path(p))?;
            let model = serde_json::from_str(&text).map_err(|e| Error::from(e).at_path(p))?;
            return Ok((None, Some(model)));
        }
        let map = paths.label_map.as_deref().map(read_label_map).transpose()?;
        let labels = paths
            .labels
            .as_deref()
            .map(|p| read_labels_csv(p, map.as_ref()))
            .transpose()?;
        Ok((labels, None))
    };
    let (labels, sentiment_model) = sentiment().map_err(|e| e.in_stage("sentiment"))?;
    Ok(Inputs {
        docs,
        embeddings,
        labels,
        sentiment_model,
    })
}

/// Preprocessed corpus aligned with its embeddings.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Ids of kept documents, in input order.
    pub ids: Vec<String>,
    /// Documents dropped because no token survived preprocessing.
    pub dropped: Vec<String>,
    pub corpus: BowCorpus,
    /// In-vocabulary token ids per kept document, in text order.
    pub token_ids: Vec<Vec<usize>>,
    pub embeddings: EmbeddingMatrix,
}

pub fn prepare(docs: &[RawDocument], embeddings: &EmbeddingMatrix, config: &PipelineConfig) -> Result<Prepared> {
    let (kept, dropped) = (|| {
        let pre = preprocess_corpus(docs)?;
        let kept = pre.non_empty();
        if kept.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok((kept, pre.empty_ids))
    })()
    .map_err(|e| e.in_stage("preprocess"))?;
    let vocab = build_vocabulary(&kept, config.preprocess.min_df, config.preprocess.max_df_fraction)
        .map_err(|e| e.in_stage("preprocess"))?;
    let token_ids = kept.iter().map(|d| vocab.encode(&d.tokens)).collect();
    let corpus = BowCorpus::new(&kept, Arc::new(vocab));
    let ids: Vec<String> = kept.into_iter().map(|d| d.id).collect();
    let embeddings = embeddings.select(&ids).map_err(|e| e.in_stage("embeddings"))?;
    Ok(Prepared {
        ids,
        dropped,
        corpus,
        token_ids,
        embeddings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicCoherence {
    /// Per topic; `None` where fewer than two scorable words exist.
    pub cv: Vec<Option<f64>>,
    pub umass: Vec<Option<f64>>,
    pub cv_mean: f64,
    pub umass_mean: f64,
}

fn mean_defined(xs: &[Option<f64>]) -> f64 {
    let v: Vec<f64> = xs.iter().flatten().copied().collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn coherence(topics: &[Vec<usize>], stats: &CooccurrenceStats) -> TopicCoherence {
    let cv: Vec<Option<f64>> = topics.iter().map(|t| cv_coherence(t, stats).ok()).collect();
    let umass: Vec<Option<f64>> = topics.iter().map(|t| umass_coherence(t, stats).ok()).collect();
    TopicCoherence {
        cv_mean: mean_defined(&cv),
        umass_mean: mean_defined(&umass),
        cv,
        umass,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicMetrics {
    pub lda: TopicCoherence,
    pub fused: TopicCoherence,
    /// Silhouette of the latent codes under their K-Means assignments.
    pub silhouette_fused_latent: Option<f64>,
    /// Silhouette of K-Means run directly on the embedding block.
    pub silhouette_raw_embedding: Option<f64>,
}

/// Topic-model half of the pipeline for one configuration.
#[derive(Debug, Clone)]
pub struct TopicRun {
    pub lda: LdaModel,
    pub fused: FusedMatrix,
    pub autoencoder: AeModel,
    pub latent: Array2<f64>,
    pub clusters: ClusterModel,
    pub raw_clusters: ClusterModel,
    /// Top term ids per LDA topic.
    pub lda_topics: Vec<Vec<usize>>,
    /// Top `(term id, count)` per cluster.
    pub cluster_terms: Vec<Vec<(usize, u64)>>,
    pub metrics: TopicMetrics,
}

fn silhouette_opt(data: &Array2<f64>, assignments: &[usize]) -> Result<Option<f64>> {
    let distinct: BTreeSet<usize> = assignments.iter().copied().collect();
    if distinct.len() < 2 {
        return Ok(None);
    }
    silhouette(data, assignments).map(Some)
}

pub fn run_topics(prep: &Prepared, config: &PipelineConfig) -> Result<TopicRun> {
    let lda = train_lda(&prep.corpus, &config.lda).map_err(|e| e.in_stage("lda"))?;
    let fused = fuse_embeddings(&lda.theta, &prep.embeddings, &config.fusion).map_err(|e| e.in_stage("fusion"))?;
    let (autoencoder, latent) = (|| {
        let ae = train_autoencoder(&fused.data, &prep.ids, &config.autoencoder)?;
        let latent = ae.encode(&fused.data)?;
        Ok((ae, latent))
    })()
    .map_err(|e: Error| e.in_stage("autoencoder"))?;
    let clusters = kmeans(&latent, &config.kmeans).map_err(|e| e.in_stage("kmeans"))?;

    let metrics_stage = || -> Result<_> {
        let n = config.metrics.top_n;
        let lda_topics: Vec<Vec<usize>> = (0..lda.num_topics())
            .map(|t| lda.top_words(t, n))
            .collect::<Result<_>>()?;
        let cluster_terms = cluster_top_term_ids(&clusters.assignments, clusters.k(), &prep.corpus, n)?;
        let cluster_topics: Vec<Vec<usize>> =
            cluster_terms.iter().map(|t| t.iter().map(|&(w, _)| w).collect()).collect();
        let tracked: Vec<usize> = lda_topics
            .iter()
            .chain(&cluster_topics)
            .flatten()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let stats = CooccurrenceStats::build(&prep.token_ids, Some(&tracked), config.metrics.window)?;

        let h = fused.embedding_block().to_owned();
        let raw_clusters = kmeans(&h, &config.kmeans)?;
        let metrics = TopicMetrics {
            lda: coherence(&lda_topics, &stats),
            fused: coherence(&cluster_topics, &stats),
            silhouette_fused_latent: silhouette_opt(&latent, &clusters.assignments)?,
            silhouette_raw_embedding: silhouette_opt(&h, &raw_clusters.assignments)?,
        };
        Ok((lda_topics, cluster_terms, raw_clusters, metrics))
    };
    let (lda_topics, cluster_terms, raw_clusters, metrics) = metrics_stage().map_err(|e| e.in_stage("metrics"))?;
    Ok(TopicRun {
        lda,
        fused,
        autoencoder,
        latent,
        clusters,
        raw_clusters,
        lda_topics,
        cluster_terms,
        metrics,
    })
}

#[derive(Debug, Clone)]
pub struct SentimentOutcome {
    pub model: SentimentModel,
    pub predictions: Vec<Prediction>,
    /// Present when the head was trained here; scored on its training rows.
    pub training_evaluation: Option<Evaluation>,
    pub trained_on: usize,
}

fn run_sentiment(prep: &Prepared, inputs: &Inputs, config: &PipelineConfig) -> Result<SentimentOutcome> {
    let features = prep.embeddings.to_f64();
    let (model, training_evaluation, trained_on) = match (&inputs.sentiment_model, &inputs.labels) {
        (Some(m), _) => (m.clone(), None, 0),
        (None, Some(labels)) => {
            let by_id: HashMap<&str, Sentiment> = labels.iter().map(|(id, s)| (id.as_str(), *s)).collect();
            let rows: Vec<usize> = (0..prep.ids.len()).filter(|&i| by_id.contains_key(prep.ids[i].as_str())).collect();
            let y: Vec<Sentiment> = rows.iter().map(|&i| by_id[prep.ids[i].as_str()]).collect();
            let set = LabeledSet::new(features.select(ndarray::Axis(0), &rows), y)?;
            let model = train_classifier(&set, &config.sentiment)?;
            let eval = evaluate(&model, &set)?;
            (model, Some(eval), rows.len())
        }
        (None, None) => {
            return Err(Error::InvalidParameter(
                "sentiment needs paths.labels or paths.sentiment_model".into(),
            ))
        }
    };
    let predictions = predict(&model, &features)?;
    Ok(SentimentOutcome {
        model,
        predictions,
        training_evaluation,
        trained_on,
    })
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub input_docs: usize,
    pub prepared: Prepared,
    pub topics: TopicRun,
    pub sentiment: SentimentOutcome,
    pub join: JoinReport,
}

pub fn run_in_memory(inputs: &Inputs, config: &PipelineConfig) -> Result<PipelineOutput> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    let prepared = prepare(&inputs.docs, &inputs.embeddings, config)?;
    let topics = run_topics(&prepared, config)?;
    let sentiment = run_sentiment(&prepared, inputs, config).map_err(|e| e.in_stage("sentiment"))?;
    let assignments: Vec<(String, usize)> = prepared
        .ids
        .iter()
        .cloned()
        .zip(topics.clusters.assignments.iter().copied())
        .collect();
    let labels: Vec<(String, Sentiment)> = prepared
        .ids
        .iter()
        .cloned()
        .zip(sentiment.predictions.iter().map(|p| p.class))
        .collect();
    let join = join_topics_sentiments(&assignments, &labels).map_err(|e| e.in_stage("join"))?;
    Ok(PipelineOutput {
        input_docs: inputs.docs.len(),
        prepared,
        topics,
        sentiment,
        join,
    })
}

pub const ARTIFACTS: [&str; 6] = [
    "topics.json",
    "assignments.csv",
    "wordcloud_freqs.json",
    "metrics.json",
    "sentiment.csv",
    "report.json",
];

#[derive(Serialize)]
struct WeightedTerm<'a> {
    term: &'a str,
    weight: f64,
}

#[derive(Serialize)]
struct LdaTopicOut<'a> {
    topic: usize,
    words: Vec<WeightedTerm<'a>>,
}

#[derive(Serialize)]
struct ClusterOut {
    cluster: usize,
    size: usize,
    terms: Vec<TermCount>,
}

#[derive(Serialize)]
struct TopicsFile<'a> {
    lda: Vec<LdaTopicOut<'a>>,
    clusters: Vec<ClusterOut>,
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    topics: &'a TopicMetrics,
    sentiment_training: Option<&'a Evaluation>,
}

#[derive(Serialize)]
struct DocumentsSummary<'a> {
    input: usize,
    kept: usize,
    dropped_empty: &'a [String],
    vocabulary_size: usize,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    config: &'a PipelineConfig,
    documents: DocumentsSummary<'a>,
    lda_log_likelihood: f64,
    autoencoder_initial_loss: f64,
    autoencoder_history: &'a [crate::autoencoder::EpochLoss],
    kmeans_inertia: f64,
    kmeans_iterations: usize,
    kmeans_restart_inertias: &'a [f64],
    sentiment_trained_on: usize,
    sentiment_by_cluster: &'a [ClusterSentiment],
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::from(e).at_path(path))
}

fn term_counts(corpus: &BowCorpus, ranked: &[(usize, u64)]) -> Vec<TermCount> {
    ranked
        .iter()
        .map(|&(t, count)| TermCount {
            term: corpus.vocab().term(t).expect("valid index").to_owned(),
            count,
        })
        .collect()
}

/// Writes the six run artifacts. Files written before a failure are removed.
pub fn write_artifacts(out_dir: &Path, output: &PipelineOutput, config: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let result = write_all(out_dir, output, config, &mut written);
    if result.is_err() {
        for p in &written {
            let _ = std::fs::remove_file(p);
        }
    }
    result.map(|_| written)
}

fn write_all(out_dir: &Path, out: &PipelineOutput, config: &PipelineConfig, written: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::from(e).at_path(out_dir))?;
    let prep = &out.prepared;
    let topics = &out.topics;
    let vocab = prep.corpus.vocab();
    let mut step = |name: &str, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        let path = out_dir.join(name);
        written.push(path.clone());
        f(&path)
    };

    step("topics.json", &|p| {
        let lda = topics
            .lda_topics
            .iter()
            .enumerate()
            .map(|(t, words)| LdaTopicOut {
                topic: t,
                words: words
                    .iter()
                    .map(|&w| WeightedTerm {
                        term: vocab.term(w).expect("valid index"),
                        weight: topics.lda.phi[[t, w]],
                    })
                    .collect(),
            })
            .collect();
        let sizes = topics.clusters.cluster_sizes();
        let clusters = topics
            .cluster_terms
            .iter()
            .enumerate()
            .map(|(c, ranked)| ClusterOut {
                cluster: c,
                size: sizes[c],
                terms: term_counts(&prep.corpus, ranked),
            })
            .collect();
        write_json(p, &TopicsFile { lda, clusters })
    })?;
    step("assignments.csv", &|p| write_assignments_csv(p, &prep.ids, &topics.clusters.assignments))?;
    step("wordcloud_freqs.json", &|p| {
        let tops: Vec<Vec<TermCount>> = topics.cluster_terms.iter().map(|r| term_counts(&prep.corpus, r)).collect();
        crate::clustering::write_wordcloud_json(p, &tops)
    })?;
    step("metrics.json", &|p| {
        write_json(
            p,
            &MetricsFile {
                topics: &topics.metrics,
                sentiment_training: out.sentiment.training_evaluation.as_ref(),
            },
        )
    })?;
    step("sentiment.csv", &|p| write_sentiment_csv(p, &out.join, &out.sentiment.predictions))?;
    step("report.json", &|p| {
        write_json(
            p,
            &ReportFile {
                config,
                documents: DocumentsSummary {
                    input: out.input_docs,
                    kept: prep.ids.len(),
                    dropped_empty: &prep.dropped,
                    vocabulary_size: vocab.len(),
                },
                lda_log_likelihood: topics.lda.log_likelihood(&prep.corpus)?,
                autoencoder_initial_loss: topics.autoencoder.initial_loss,
                autoencoder_history: &topics.autoencoder.history,
                kmeans_inertia: topics.clusters.inertia,
                kmeans_iterations: topics.clusters.iterations,
                kmeans_restart_inertias: &topics.clusters.restart_inertias,
                sentiment_trained_on: out.sentiment.trained_on,
                sentiment_by_cluster: &out.join.clusters,
            },
        )
    })?;
    Ok(())
}

/// `id,cluster,sentiment,p_positive,p_negative,p_neutral`
fn write_sentiment_csv(path: &Path, join: &JoinReport, preds: &[Prediction]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::from(e).at_path(path))?;
    w.write_record(["id", "cluster", "sentiment", "p_positive", "p_negative", "p_neutral"])?;
    for (row, p) in join.rows.iter().zip(preds) {
        let [a, b, c] = p.probabilities.map(|x| format!("{x:.16e}"));
        w.write_record([row.id.as_str(), &row.cluster.to_string(), row.sentiment.as_str(), &a, &b, &c])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output: PipelineOutput,
    pub artifacts: Vec<PathBuf>,
}

/// Reads inputs named in `config.paths`, runs every stage and writes the
/// artifacts into `config.paths.out_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunSummary> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    let inputs = load_inputs(config)?;
    let output = run_in_memory(&inputs, config)?;
    let artifacts = write_artifacts(&config.paths.out_dir, &output, config).map_err(|e| e.in_stage("write"))?;
    Ok(RunSummary { output, artifacts })
}
