use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autoencoder::AeConfig;
use crate::clustering::KMeansConfig;
use crate::corpus::{DEFAULT_MAX_DF_FRACTION, DEFAULT_MIN_DF};
use crate::fusion::FusionConfig;
use crate::lda::LdaHyperParams;
use crate::metrics::{DEFAULT_TOP_N, DEFAULT_WINDOW};
use crate::sentiment::SentimentTrainConfig;
use crate::{Error, Result};

/// Topic counts explored in the original grid search.
pub const K_GRID: [usize; 8] = [5, 6, 7, 8, 10, 12, 15, 17];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    /// CSV (`id,text`) or JSONL corpus.
    pub corpus: Option<PathBuf>,
    /// TBEM or JSONL embeddings keyed by document id.
    pub embeddings: Option<PathBuf>,
    /// `id,label` CSV used to train the sentiment head.
    pub labels: Option<PathBuf>,
    pub label_map: Option<PathBuf>,
    /// Pre-trained sentiment head; takes precedence over `labels`.
    pub sentiment_model: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            corpus: None,
            embeddings: None,
            labels: None,
            label_map: None,
            sentiment_model: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub min_df: usize,
    pub max_df_fraction: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            min_df: DEFAULT_MIN_DF,
            max_df_fraction: DEFAULT_MAX_DF_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub top_n: usize,
    pub window: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            top_n: DEFAULT_TOP_N,
            window: DEFAULT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub preprocess: PreprocessConfig,
    pub lda: LdaHyperParams,
    pub fusion: FusionConfig,
    pub autoencoder: AeConfig,
    pub kmeans: KMeansConfig,
    pub sentiment: SentimentTrainConfig,
    pub metrics: MetricsConfig,
    pub k_sweep: Vec<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            paths: PathsConfig::default(),
            preprocess: PreprocessConfig::default(),
            lda: LdaHyperParams::default(),
            fusion: FusionConfig::default(),
            autoencoder: AeConfig::default(),
            kmeans: KMeansConfig::default(),
            sentiment: SentimentTrainConfig::default(),
            metrics: MetricsConfig::default(),
            k_sweep: K_GRID.to_vec(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at_path(path))?;
        serde_json::from_str(&text).map_err(|e| Error::from(e).at_path(path))
    }

    /// Sets every stage seed to `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.lda.seed = seed;
        self.autoencoder.seed = seed;
        self.kmeans.seed = seed;
        self.sentiment.seed = seed;
        self
    }

    /// Sets the LDA topic count and the cluster count together.
    pub fn with_k(mut self, k: usize) -> Self {
        self.lda.k = k;
        self.kmeans.k = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.lda.validate()?;
        self.fusion.validate()?;
        self.autoencoder.validate()?;
        self.kmeans.validate()?;
        self.sentiment.validate()?;
        if self.metrics.top_n < 2 || self.metrics.window == 0 {
            return Err(Error::InvalidParameter("metrics.top_n ≥ 2 and metrics.window ≥ 1 required".into()));
        }
        Ok(())
    }
}
