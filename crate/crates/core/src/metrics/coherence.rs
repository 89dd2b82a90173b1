//! Topic coherence from document and sliding-window co-occurrence counts.
//!
//! UMass works on document frequencies. C_V builds, for each top word, a
//! vector of NPMI values against every top word (window statistics), then
//! averages the cosine between each word's vector and the sum of all of them.

use std::collections::HashMap;

use crate::{Error, Result};

pub const DEFAULT_WINDOW: usize = 110;
pub const DEFAULT_TOP_N: usize = 10;

const NPMI_EPS: f64 = 1e-12;

/// Co-occurrence counts restricted to a fixed set of tracked term ids.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceStats {
    words: Vec<usize>,
    slot: HashMap<usize, usize>,
    num_docs: u64,
    doc_freq: Vec<u64>,
    doc_pair: Vec<u64>,
    window_size: usize,
    num_windows: u64,
    window_freq: Vec<u64>,
    window_pair: Vec<u64>,
}

impl CooccurrenceStats {
    /// Counts over token-id sequences. Each document yields one window if it
    /// is shorter than `window_size`, otherwise one per sliding position.
    /// With `words = None` every id that occurs is tracked.
    pub fn build(docs: &[Vec<usize>], words: Option<&[usize]>, window_size: usize) -> Result<Self> {
        if window_size == 0 {
            return Err(Error::InvalidParameter("window size must be at least 1".into()));
        }
        let mut words: Vec<usize> = match words {
            Some(w) => w.to_vec(),
            None => docs.iter().flatten().copied().collect(),
        };
        words.sort_unstable();
        words.dedup();
        let slot: HashMap<usize, usize> = words.iter().enumerate().map(|(i, &w)| (w, i)).collect();
        let n = words.len();
        let mut stats = CooccurrenceStats {
            words,
            slot,
            num_docs: docs.len() as u64,
            doc_freq: vec![0; n],
            doc_pair: vec![0; n * n],
            window_size,
            num_windows: 0,
            window_freq: vec![0; n],
            window_pair: vec![0; n * n],
        };

        let mut counts = vec![0u32; n];
        let mut present: Vec<usize> = Vec::new();
        for doc in docs {
            let slots: Vec<Option<usize>> = doc.iter().map(|w| stats.slot.get(w).copied()).collect();

            present.clear();
            for s in slots.iter().flatten() {
                if counts[*s] == 0 {
                    present.push(*s);
                }
                counts[*s] += 1;
            }
            tally(&present, &mut stats.doc_freq, &mut stats.doc_pair, n);
            for &s in &present {
                counts[s] = 0;
            }

            if doc.is_empty() {
                continue;
            }
            let w = window_size.min(doc.len());
            present.clear();
            for s in slots[..w].iter().flatten() {
                if counts[*s] == 0 {
                    present.push(*s);
                }
                counts[*s] += 1;
            }
            tally(&present, &mut stats.window_freq, &mut stats.window_pair, n);
            stats.num_windows += 1;
            for start in 1..=(doc.len() - w) {
                if let Some(out) = slots[start - 1] {
                    counts[out] -= 1;
                    if counts[out] == 0 {
                        present.retain(|&p| p != out);
                    }
                }
                if let Some(inc) = slots[start + w - 1] {
                    if counts[inc] == 0 {
                        present.push(inc);
                    }
                    counts[inc] += 1;
                }
                tally(&present, &mut stats.window_freq, &mut stats.window_pair, n);
                stats.num_windows += 1;
            }
            for &s in &present {
                counts[s] = 0;
            }
        }
        Ok(stats)
    }

    pub fn words(&self) -> &[usize] {
        &self.words
    }

    pub fn num_docs(&self) -> u64 {
        self.num_docs
    }

    pub fn num_windows(&self) -> u64 {
        self.num_windows
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    fn slot_of(&self, word: usize) -> Result<usize> {
        self.slot
            .get(&word)
            .copied()
            .ok_or_else(|| Error::InvalidParameter(format!("term {word} is not tracked by these statistics")))
    }

    /// D(w): documents containing `word`.
    pub fn doc_frequency(&self, word: usize) -> Result<u64> {
        Ok(self.doc_freq[self.slot_of(word)?])
    }

    /// D(a, b): documents containing both words.
    pub fn co_doc_frequency(&self, a: usize, b: usize) -> Result<u64> {
        let (i, j) = (self.slot_of(a)?, self.slot_of(b)?);
        Ok(self.doc_pair[i * self.words.len() + j])
    }

    pub fn window_frequency(&self, word: usize) -> Result<u64> {
        Ok(self.window_freq[self.slot_of(word)?])
    }

    pub fn co_window_frequency(&self, a: usize, b: usize) -> Result<u64> {
        let (i, j) = (self.slot_of(a)?, self.slot_of(b)?);
        Ok(self.window_pair[i * self.words.len() + j])
    }

    /// Normalized PMI over windows, in [-1, 1]. Zero if either word never
    /// appears in a window.
    pub fn npmi(&self, a: usize, b: usize) -> Result<f64> {
        let n = self.num_windows as f64;
        let ca = self.window_frequency(a)?;
        let cb = self.window_frequency(b)?;
        if ca == 0 || cb == 0 {
            return Ok(0.0);
        }
        let cab = self.co_window_frequency(a, b)?;
        if cab == self.num_windows {
            return Ok(1.0);
        }
        let (pa, pb, pab) = (ca as f64 / n, cb as f64 / n, cab as f64 / n);
        let pmi = ((pab + NPMI_EPS) / (pa * pb)).ln();
        Ok(pmi / -(pab + NPMI_EPS).ln())
    }
}

fn tally(present: &[usize], freq: &mut [u64], pair: &mut [u64], n: usize) {
    for &i in present {
        freq[i] += 1;
        for &j in present {
            pair[i * n + j] += 1;
        }
    }
}

fn check_words(words: &[usize]) -> Result<()> {
    if words.len() < 2 {
        return Err(Error::InvalidParameter("coherence needs at least 2 words".into()));
    }
    let mut sorted = words.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter("duplicate word in topic".into()));
    }
    Ok(())
}

/// Σ_{i<j} log((D(w_i, w_j) + 1) / D(w_j)), words ordered by descending
/// document frequency (ties by term id).
pub fn umass_coherence(top_words: &[usize], stats: &CooccurrenceStats) -> Result<f64> {
    check_words(top_words)?;
    let mut ranked: Vec<(usize, u64)> = top_words
        .iter()
        .map(|&w| Ok((w, stats.doc_frequency(w)?)))
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    if ranked.iter().filter(|(_, d)| *d > 0).count() < 2 {
        return Err(Error::InvalidParameter(
            "fewer than 2 topic words occur in the reference corpus".into(),
        ));
    }
    let mut score = 0.0;
    for (i, &(wi, _)) in ranked.iter().enumerate() {
        for &(wj, dj) in &ranked[i + 1..] {
            if dj == 0 {
                continue;
            }
            let co = stats.co_doc_frequency(wi, wj)?;
            score += ((co as f64 + 1.0) / dj as f64).ln();
        }
    }
    Ok(score)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn cv_coherence(top_words: &[usize], stats: &CooccurrenceStats) -> Result<f64> {
    check_words(top_words)?;
    let vectors: Vec<Vec<f64>> = top_words
        .iter()
        .map(|&a| top_words.iter().map(|&b| stats.npmi(a, b)).collect())
        .collect::<Result<_>>()?;
    let mut total = vec![0.0; top_words.len()];
    for v in &vectors {
        for (t, x) in total.iter_mut().zip(v) {
            *t += x;
        }
    }
    if vectors.iter().flatten().all(|&x| x == 0.0) {
        log::warn!("all NPMI context vectors are zero; C_V coherence reported as 0");
        return Ok(0.0);
    }
    Ok(vectors.iter().map(|v| cosine(v, &total)).sum::<f64>() / vectors.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn umass_two_doc_example() {
        // a = 0, b = 1; docs {a, b}, {a}
        let stats = CooccurrenceStats::build(&[vec![0, 1], vec![0]], None, DEFAULT_WINDOW).unwrap();
        let s = umass_coherence(&[1, 0], &stats).unwrap();
        assert!((s - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn umass_signs() {
        let apart = CooccurrenceStats::build(&[vec![0], vec![0], vec![1], vec![1]], None, 10).unwrap();
        assert!((umass_coherence(&[0, 1], &apart).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        let together = CooccurrenceStats::build(&[vec![0, 1], vec![0, 1], vec![0]], None, 10).unwrap();
        assert!((umass_coherence(&[0, 1], &together).unwrap() - 1.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn umass_needs_two_scorable_words() {
        let stats = CooccurrenceStats::build(&[vec![0]], Some(&[0, 1]), 10).unwrap();
        assert!(umass_coherence(&[0, 1], &stats).is_err());
        assert!(umass_coherence(&[0], &stats).is_err());
        assert!(umass_coherence(&[0, 7], &stats).is_err());
    }

    #[test]
    fn window_counts_slide() {
        // windows of 2 over [0 1 2 0]: {0,1} {1,2} {2,0}
        let stats = CooccurrenceStats::build(&[vec![0, 1, 2, 0]], None, 2).unwrap();
        assert_eq!(stats.num_windows(), 3);
        assert_eq!(stats.window_frequency(0).unwrap(), 2);
        assert_eq!(stats.window_frequency(1).unwrap(), 2);
        assert_eq!(stats.co_window_frequency(0, 2).unwrap(), 1);
        assert_eq!(stats.co_window_frequency(0, 1).unwrap(), 1);
        assert_eq!(stats.doc_frequency(0).unwrap(), 1);
        // short document is one window
        let short = CooccurrenceStats::build(&[vec![3, 4]], None, 110).unwrap();
        assert_eq!(short.num_windows(), 1);
    }

    #[test]
    fn identical_contexts_give_cosine_one() {
        let docs = vec![vec![0, 1], vec![0, 1], vec![2], vec![2, 3]];
        let stats = CooccurrenceStats::build(&docs, None, 110).unwrap();
        let s = cv_coherence(&[0, 1], &stats).unwrap();
        assert!((s - 1.0).abs() < 1e-9, "{s}");
    }

    #[test]
    fn cooccurring_topic_beats_separated_topic() {
        let together: Vec<Vec<usize>> = (0..20)
            .map(|i| if i % 2 == 0 { vec![0, 1, 2] } else { vec![3, 4, 5] })
            .collect();
        let apart: Vec<Vec<usize>> = (0..20).map(|i| vec![i % 3, 3 + i % 3]).collect();
        let a = CooccurrenceStats::build(&together, None, 110).unwrap();
        let b = CooccurrenceStats::build(&apart, None, 110).unwrap();
        let ca = cv_coherence(&[0, 1, 2], &a).unwrap();
        let cb = cv_coherence(&[0, 1, 2], &b).unwrap();
        assert!(ca > cb, "{ca} vs {cb}");
    }

    #[test]
    fn zero_vectors_score_zero() {
        let stats = CooccurrenceStats::build(&[vec![5]], Some(&[0, 1]), 10).unwrap();
        assert_eq!(cv_coherence(&[0, 1], &stats).unwrap(), 0.0);
    }
}
