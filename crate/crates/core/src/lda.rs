//! Latent Dirichlet Allocation fitted by collapsed Gibbs sampling.
//!
//! Each token's topic is resampled from the full conditional
//!
//! ```text
//! p(z = t | rest) ∝ (n_dt + α) · (n_tw + β) / (n_t + Vβ)
//! ```
//!
//! with the token's own assignment removed from the counts. θ and φ are
//! read off the counts after the final sweep (or averaged over post-burn-in
//! sweeps when `average_samples` is set), smoothed by the priors.

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::BowCorpus;
use crate::serde_util::vec_sig17;
use crate::{Error, Result};

/// Doc-topic prior values explored in the original experiments.
pub const ALPHA_GRID: [f64; 4] = [0.01, 0.1, 0.2, 0.3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaHyperParams {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Average θ/φ over every sweep after burn-in instead of using only the
    /// final state.
    pub average_samples: bool,
    /// Record the log-likelihood every this many sweeps (0 disables).
    pub trace_interval: usize,
}

impl Default for LdaHyperParams {
    fn default() -> Self {
        LdaHyperParams {
            k: 8,
            alpha: 0.1,
            beta: 0.01,
            iterations: 1000,
            burn_in: 200,
            seed: 0,
            average_samples: false,
            trace_interval: 0,
        }
    }
}

impl LdaHyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.k == 0 {
            return bad("lda.k must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("lda.alpha must be positive, got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("lda.beta must be positive, got {}", self.beta));
        }
        if self.iterations <= self.burn_in {
            return bad(format!(
                "lda.iterations ({}) must exceed lda.burn_in ({})",
                self.iterations, self.burn_in
            ));
        }
        Ok(())
    }
}

/// Sampler state left behind by training.
#[derive(Debug, Clone)]
pub struct GibbsState {
    /// Topic of every token, documents in corpus order and tokens in
    /// ascending term order within a document.
    pub z: Vec<Vec<u32>>,
    /// `n_dk`, M×K.
    pub doc_topic: Array2<u32>,
    /// `n_kw`, K×V.
    pub topic_word: Array2<u32>,
    /// `n_k`.
    pub topic_totals: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct LdaModel {
    pub params: LdaHyperParams,
    /// K×V, rows sum to one.
    pub phi: Array2<f64>,
    /// M×K, rows sum to one.
    pub theta: Array2<f64>,
    /// Present for freshly trained models, absent after deserialization.
    pub state: Option<GibbsState>,
    /// `(sweep, log-likelihood)` pairs when tracing is enabled.
    pub ll_trace: Vec<(usize, f64)>,
}

impl LdaModel {
    pub fn num_topics(&self) -> usize {
        self.phi.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.phi.ncols()
    }

    pub fn num_docs(&self) -> usize {
        self.theta.nrows()
    }

    /// The topic mixture ω of one training document.
    pub fn doc_topic_vector(&self, doc_index: usize) -> Result<ArrayView1<'_, f64>> {
        if doc_index >= self.num_docs() {
            return Err(Error::IndexOutOfRange {
                index: doc_index,
                len: self.num_docs(),
            });
        }
        Ok(self.theta.row(doc_index))
    }

    /// Term indices of the `n` highest-probability words of `topic`, ties
    /// broken by ascending term index. `n` is clipped to V.
    pub fn top_words(&self, topic: usize, n: usize) -> Result<Vec<usize>> {
        if topic >= self.num_topics() {
            return Err(Error::IndexOutOfRange {
                index: topic,
                len: self.num_topics(),
            });
        }
        let row = self.phi.row(topic);
        let mut idx: Vec<usize> = (0..row.len()).collect();
        idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        idx.truncate(n);
        Ok(idx)
    }

    /// `Σ_tokens log Σ_t θ[d][t] φ[t][w]` over `corpus`, which must be the
    /// training corpus (same documents and vocabulary).
    pub fn log_likelihood(&self, corpus: &BowCorpus) -> Result<f64> {
        if corpus.vocab().len() != self.vocab_size() {
            return Err(Error::VocabularyMismatch {
                expected: self.vocab_size(),
                found: corpus.vocab().len(),
            });
        }
        if corpus.len() != self.num_docs() {
            return Err(Error::ShapeMismatch(format!(
                "model has {} documents, corpus has {}",
                self.num_docs(),
                corpus.len()
            )));
        }
        Ok(log_likelihood_of(&self.theta, &self.phi, corpus))
    }
}

fn log_likelihood_of(theta: &Array2<f64>, phi: &Array2<f64>, corpus: &BowCorpus) -> f64 {
    let k = phi.nrows();
    let mut ll = 0.0;
    for (d, doc) in corpus.docs().iter().enumerate() {
        for &(w, c) in &doc.counts {
            let p: f64 = (0..k).map(|t| theta[[d, t]] * phi[[t, w]]).sum();
            ll += c as f64 * p.ln();
        }
    }
    ll
}

struct Sampler {
    k: usize,
    v: usize,
    alpha: f64,
    beta: f64,
    z: Vec<Vec<u32>>,
    words: Vec<Vec<u32>>,
    /// row-major M×K
    n_dk: Vec<u32>,
    /// row-major V×K (word-major for locality in the inner loop)
    n_wk: Vec<u32>,
    n_k: Vec<u64>,
}

impl Sampler {
    fn new(corpus: &BowCorpus, params: &LdaHyperParams, rng: &mut ChaCha8Rng) -> Self {
        let k = params.k;
        let v = corpus.vocab().len();
        let m = corpus.len();
        let words: Vec<Vec<u32>> = corpus
            .docs()
            .iter()
            .map(|d| {
                d.counts
                    .iter()
                    .flat_map(|&(w, c)| std::iter::repeat_n(w as u32, c as usize))
                    .collect()
            })
            .collect();
        let mut s = Sampler {
            k,
            v,
            alpha: params.alpha,
            beta: params.beta,
            z: Vec::with_capacity(m),
            words,
            n_dk: vec![0; m * k],
            n_wk: vec![0; v * k],
            n_k: vec![0; k],
        };
        for d in 0..m {
            let zs: Vec<u32> = s.words[d]
                .iter()
                .map(|_| rng.random_range(0..k as u32))
                .collect();
            for (&w, &t) in s.words[d].iter().zip(&zs) {
                s.n_dk[d * k + t as usize] += 1;
                s.n_wk[w as usize * k + t as usize] += 1;
                s.n_k[t as usize] += 1;
            }
            s.z.push(zs);
        }
        s
    }

    fn sweep(&mut self, rng: &mut ChaCha8Rng, probs: &mut [f64]) {
        let k = self.k;
        let v_beta = self.v as f64 * self.beta;
        for d in 0..self.words.len() {
            for i in 0..self.words[d].len() {
                let w = self.words[d][i] as usize;
                let old = self.z[d][i] as usize;
                self.n_dk[d * k + old] -= 1;
                self.n_wk[w * k + old] -= 1;
                self.n_k[old] -= 1;

                let dk = &self.n_dk[d * k..(d + 1) * k];
                let wk = &self.n_wk[w * k..(w + 1) * k];
                let mut total = 0.0;
                for t in 0..k {
                    total += (dk[t] as f64 + self.alpha) * (wk[t] as f64 + self.beta)
                        / (self.n_k[t] as f64 + v_beta);
                    probs[t] = total;
                }
                let u = rng.random::<f64>() * total;
                let new = probs.iter().position(|&c| c > u).unwrap_or(k - 1);

                self.z[d][i] = new as u32;
                self.n_dk[d * k + new] += 1;
                self.n_wk[w * k + new] += 1;
                self.n_k[new] += 1;
            }
        }
        debug_assert!(self.counts_conserved());
    }

    fn counts_conserved(&self) -> bool {
        let tokens: u64 = self.words.iter().map(|w| w.len() as u64).sum();
        let dk: u64 = self.n_dk.iter().map(|&c| c as u64).sum();
        let wk: u64 = self.n_wk.iter().map(|&c| c as u64).sum();
        let k: u64 = self.n_k.iter().sum();
        dk == tokens && wk == tokens && k == tokens
    }

    fn theta(&self) -> Array2<f64> {
        let (m, k) = (self.words.len(), self.k);
        let mut theta = Array2::zeros((m, k));
        for d in 0..m {
            let mut row = theta.row_mut(d);
            for t in 0..k {
                row[t] = self.n_dk[d * k + t] as f64 + self.alpha;
            }
            let s = row.sum();
            row /= s;
        }
        theta
    }

    fn phi(&self) -> Array2<f64> {
        let (k, v) = (self.k, self.v);
        let mut phi = Array2::zeros((k, v));
        for t in 0..k {
            let mut row = phi.row_mut(t);
            for w in 0..v {
                row[w] = self.n_wk[w * k + t] as f64 + self.beta;
            }
            let s = row.sum();
            row /= s;
        }
        phi
    }

    fn into_state(self) -> GibbsState {
        let (m, k, v) = (self.words.len(), self.k, self.v);
        let doc_topic = Array2::from_shape_vec((m, k), self.n_dk).expect("shape");
        let topic_word = Array2::from_shape_fn((k, v), |(t, w)| self.n_wk[w * k + t]);
        GibbsState {
            z: self.z,
            doc_topic,
            topic_word,
            topic_totals: self.n_k,
        }
    }
}

fn renormalize_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let s = row.sum();
        row /= s;
    }
}

/// Fits LDA to `corpus`. Identical `(corpus, params)` give bit-identical
/// models.
pub fn train_lda(corpus: &BowCorpus, params: &LdaHyperParams) -> Result<LdaModel> {
    params.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if corpus.vocab().is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut sampler = Sampler::new(corpus, params, &mut rng);
    let mut probs = vec![0.0; params.k];
    let mut trace = Vec::new();
    let tracing = params.trace_interval > 0;
    if tracing {
        trace.push((0, log_likelihood_of(&sampler.theta(), &sampler.phi(), corpus)));
    }

    let mut sums: Option<(Array2<f64>, Array2<f64>, usize)> = None;
    for sweep in 1..=params.iterations {
        sampler.sweep(&mut rng, &mut probs);
        if params.average_samples && sweep > params.burn_in {
            let (theta, phi) = (sampler.theta(), sampler.phi());
            match &mut sums {
                Some((ts, ps, n)) => {
                    *ts += &theta;
                    *ps += &phi;
                    *n += 1;
                }
                None => sums = Some((theta, phi, 1)),
            }
        }
        if tracing && (sweep % params.trace_interval == 0 || sweep == params.iterations) {
            trace.push((sweep, log_likelihood_of(&sampler.theta(), &sampler.phi(), corpus)));
        }
    }

    let (theta, phi) = match sums {
        Some((mut ts, mut ps, _)) => {
            renormalize_rows(&mut ts);
            renormalize_rows(&mut ps);
            (ts, ps)
        }
        None => (sampler.theta(), sampler.phi()),
    };
    Ok(LdaModel {
        params: params.clone(),
        phi,
        theta,
        state: Some(sampler.into_state()),
        ll_trace: trace,
    })
}

#[derive(Serialize, Deserialize)]
struct LdaModelFile {
    k: usize,
    alpha: f64,
    beta: f64,
    seed: u64,
    iterations: usize,
    burn_in: usize,
    average_samples: bool,
    vocab_size: usize,
    num_docs: usize,
    #[serde(with = "vec_sig17")]
    phi: Vec<f64>,
    #[serde(with = "vec_sig17")]
    theta: Vec<f64>,
}

impl Serialize for LdaModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LdaModelFile {
            k: self.num_topics(),
            alpha: self.params.alpha,
            beta: self.params.beta,
            seed: self.params.seed,
            iterations: self.params.iterations,
            burn_in: self.params.burn_in,
            average_samples: self.params.average_samples,
            vocab_size: self.vocab_size(),
            num_docs: self.num_docs(),
            phi: self.phi.iter().copied().collect(),
            theta: self.theta.iter().copied().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LdaModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let f = LdaModelFile::deserialize(d)?;
        let phi = Array2::from_shape_vec((f.k, f.vocab_size), f.phi).map_err(D::Error::custom)?;
        let theta =
            Array2::from_shape_vec((f.num_docs, f.k), f.theta).map_err(D::Error::custom)?;
        Ok(LdaModel {
            params: LdaHyperParams {
                k: f.k,
                alpha: f.alpha,
                beta: f.beta,
                iterations: f.iterations,
                burn_in: f.burn_in,
                seed: f.seed,
                average_samples: f.average_samples,
                trace_interval: 0,
            },
            phi,
            theta,
            state: None,
            ll_trace: Vec::new(),
        })
    }
}
