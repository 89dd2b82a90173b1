//! Deterministic synthetic corpus with planted topics and matching blob
//! embeddings.
//!
//! Every document draws most of its tokens from one planted topic (Zipfian
//! over that topic's pseudo-words), the rest from a shared background pool
//! and optionally a second topic. Its embedding is the planted topic's
//! center plus a sentiment offset plus isotropic Gaussian noise.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{is_stopword, stem, stem_fixpoint, RawDocument};
use crate::embeddings::{write_tbem, EmbeddingMatrix};
use crate::sentiment::{write_labels_csv, Sentiment};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub n_topics: usize,
    pub words_per_topic: usize,
    pub background_words: usize,
    pub doc_len_min: usize,
    pub doc_len_max: usize,
    /// Share of tokens drawn from the background pool.
    pub background_rate: f64,
    /// Share of tokens drawn from a second, per-document topic.
    pub secondary_rate: f64,
    pub zipf_exponent: f64,
    pub embedding_dim: usize,
    /// Per-coordinate noise standard deviation.
    pub noise_sigma: f64,
    /// Norm of the sentiment offset relative to the unit topic centers.
    pub sentiment_scale: f64,
    /// Probability that a positive or negative document carries an emoticon.
    pub emoticon_rate: f64,
    pub url_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_docs: 800,
            n_topics: 8,
            words_per_topic: 20,
            background_words: 40,
            doc_len_min: 3,
            doc_len_max: 6,
            background_rate: 0.2,
            secondary_rate: 0.1,
            zipf_exponent: 1.0,
            embedding_dim: 128,
            noise_sigma: 0.03,
            sentiment_scale: 1.0,
            emoticon_rate: 0.2,
            url_rate: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub docs: Vec<RawDocument>,
    pub embeddings: EmbeddingMatrix,
    pub sentiments: Vec<(String, Sentiment)>,
    /// Planted topic of each document.
    pub topics: Vec<usize>,
    pub topic_words: Vec<Vec<String>>,
    pub background: Vec<String>,
}

/// `n` distinct pseudo-words that survive preprocessing unchanged. The list
/// does not depend on any seed.
pub fn pseudo_words(n: usize) -> Vec<String> {
    const C: &[u8] = b"bdfgklmnprtvz";
    const V: &[u8] = b"aiou";
    let mut all = Vec::with_capacity(C.len().pow(3) * V.len().pow(2));
    for &c1 in C {
        for &v1 in V {
            for &c2 in C {
                for &v2 in V {
                    for &c3 in C {
                        all.push(String::from_utf8(vec![c1, v1, c2, v2, c3]).expect("ascii"));
                    }
                }
            }
        }
    }
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(0x5eed));
    all.into_iter()
        .filter(|w| !is_stopword(w) && stem(w) == *w && stem_fixpoint(w) == *w)
        .take(n)
        .collect()
}

fn zipf(n: usize, s: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|r| 1.0 / (r as f64).powf(s))).expect("positive weights")
}

fn unit_gaussian(d: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let v = Array1::from_shape_simple_fn(d, || rng.sample::<f64, _>(StandardNormal));
    let n = v.dot(&v).sqrt();
    v / n
}

pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    let c = config;
    if c.n_topics < 2 || c.words_per_topic == 0 || c.n_docs == 0 || c.embedding_dim == 0 {
        return Err(Error::InvalidParameter("synth needs ≥ 2 topics, words, docs and dims".into()));
    }
    if c.doc_len_min == 0 || c.doc_len_max < c.doc_len_min {
        return Err(Error::InvalidParameter("synth document length range is empty".into()));
    }
    if !(c.background_rate >= 0.0 && c.secondary_rate >= 0.0 && c.background_rate + c.secondary_rate < 1.0) {
        return Err(Error::InvalidParameter("synth token rates must be ≥ 0 and sum below 1".into()));
    }
    if c.background_rate > 0.0 && c.background_words == 0 {
        return Err(Error::InvalidParameter("background_rate > 0 needs background words".into()));
    }

    let words = pseudo_words(c.n_topics * c.words_per_topic + c.background_words);
    if words.len() < c.n_topics * c.words_per_topic + c.background_words {
        return Err(Error::InvalidParameter("not enough pseudo-words for this configuration".into()));
    }
    let topic_words: Vec<Vec<String>> = words
        .chunks(c.words_per_topic)
        .take(c.n_topics)
        .map(<[String]>::to_vec)
        .collect();
    let background = words[c.n_topics * c.words_per_topic..].to_vec();

    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let topic_dist = zipf(c.words_per_topic, c.zipf_exponent);
    let bg_dist = (!background.is_empty()).then(|| zipf(background.len(), c.zipf_exponent));
    let centers: Vec<Array1<f64>> = (0..c.n_topics).map(|_| unit_gaussian(c.embedding_dim, &mut rng)).collect();
    let sent_centers: Vec<Array1<f64>> = (0..3)
        .map(|_| unit_gaussian(c.embedding_dim, &mut rng) * c.sentiment_scale)
        .collect();

    let mut docs = Vec::with_capacity(c.n_docs);
    let mut topics = Vec::with_capacity(c.n_docs);
    let mut sentiments = Vec::with_capacity(c.n_docs);
    let mut emb = Array2::<f32>::zeros((c.n_docs, c.embedding_dim));
    for i in 0..c.n_docs {
        let topic = i % c.n_topics;
        let mut second = rng.random_range(0..c.n_topics - 1);
        if second >= topic {
            second += 1;
        }
        let sentiment = Sentiment::ALL[rng.random_range(0..3)];
        let len = rng.random_range(c.doc_len_min..=c.doc_len_max);
        let mut tokens: Vec<String> = (0..len)
            .map(|_| {
                let u: f64 = rng.random();
                let word = if u < c.background_rate {
                    &background[bg_dist.as_ref().expect("checked").sample(&mut rng)]
                } else if u < c.background_rate + c.secondary_rate {
                    &topic_words[second][topic_dist.sample(&mut rng)]
                } else {
                    &topic_words[topic][topic_dist.sample(&mut rng)]
                };
                if rng.random::<f64>() < 0.1 {
                    let mut cap = word.clone();
                    cap[..1].make_ascii_uppercase();
                    cap
                } else {
                    word.clone()
                }
            })
            .collect();
        if rng.random::<f64>() < c.emoticon_rate {
            match sentiment {
                Sentiment::Positive => tokens.push(":)".into()),
                Sentiment::Negative => tokens.push(":(".into()),
                Sentiment::Neutral => {}
            }
        }
        if rng.random::<f64>() < c.url_rate {
            let slug: String = (0..6).map(|_| rng.sample(rand::distr::Alphanumeric) as char).collect();
            tokens.push(format!("https://t.co/{slug}"));
        }
        let text = tokens.join(" ");

        let mut row = &centers[topic] + &sent_centers[sentiment.index()];
        row.mapv_inplace(|x| x + c.noise_sigma * rng.sample::<f64, _>(StandardNormal));
        emb.row_mut(i).assign(&row.mapv(|x| x as f32));

        let id = format!("doc{i:04}");
        sentiments.push((id.clone(), sentiment));
        docs.push(RawDocument::new(id, text));
        topics.push(topic);
    }
    let ids = docs.iter().map(|d| d.id.clone()).collect();
    Ok(SynthCorpus {
        docs,
        embeddings: EmbeddingMatrix::new(ids, emb)?,
        sentiments,
        topics,
        topic_words,
        background,
    })
}

/// Writes `corpus.csv`, `embeddings.tbem`, `labels.csv` and `planted.csv`.
pub fn write_fixture(dir: &Path, synth: &SynthCorpus) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::from(e).at_path(dir))?;
    let path = dir.join("corpus.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::from(e).at_path(&path))?;
    w.write_record(["id", "text"])?;
    for d in &synth.docs {
        w.write_record([d.id.as_str(), d.text.as_str()])?;
    }
    w.flush()?;

    write_tbem(&dir.join("embeddings.tbem"), &synth.embeddings)?;
    write_labels_csv(&dir.join("labels.csv"), &synth.sentiments)?;

    let path = dir.join("planted.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::from(e).at_path(&path))?;
    w.write_record(["id", "topic"])?;
    for (d, t) in synth.docs.iter().zip(&synth.topics) {
        w.write_record([d.id.as_str(), &t.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
