use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ProcessedDocument;
use crate::{Error, Result};

pub const DEFAULT_MIN_DF: usize = 2;
pub const DEFAULT_MAX_DF_FRACTION: f64 = 0.5;

/// Term to index bijection with document frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyFile", into = "VocabularyFile")]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    df: Vec<usize>,
    num_docs: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    terms: Vec<String>,
    df: Vec<usize>,
    num_docs: usize,
}

impl From<Vocabulary> for VocabularyFile {
    fn from(v: Vocabulary) -> Self {
        VocabularyFile {
            terms: v.terms,
            df: v.df,
            num_docs: v.num_docs,
        }
    }
}

impl TryFrom<VocabularyFile> for Vocabulary {
    type Error = Error;

    fn try_from(f: VocabularyFile) -> Result<Self> {
        Vocabulary::from_parts(f.terms, f.df, f.num_docs)
    }
}

impl Vocabulary {
    pub fn from_parts(terms: Vec<String>, df: Vec<usize>, num_docs: usize) -> Result<Self> {
        if terms.len() != df.len() {
            return Err(Error::InvalidParameter(format!(
                "vocabulary has {} terms but {} document frequencies",
                terms.len(),
                df.len()
            )));
        }
        if let Some(&bad) = df.iter().find(|&&d| d > num_docs) {
            return Err(Error::InvalidParameter(format!(
                "document frequency {bad} exceeds document count {num_docs}"
            )));
        }
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::DuplicateId(t.clone()));
            }
        }
        Ok(Vocabulary {
            terms,
            index,
            df,
            num_docs,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, index: usize) -> Option<&str> {
        self.terms.get(index).map(String::as_str)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn df(&self, index: usize) -> usize {
        self.df[index]
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    /// Token ids of a document in order, out-of-vocabulary tokens dropped.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().filter_map(|t| self.index_of(t)).collect()
    }
}

/// Builds the vocabulary from document frequencies. Terms with
/// `df < min_df` or `df / M > max_df_fraction` are dropped; survivors are
/// indexed in lexicographic order.
pub fn build_vocabulary(
    docs: &[ProcessedDocument],
    min_df: usize,
    max_df_fraction: f64,
) -> Result<Vocabulary> {
    if min_df < 1 {
        return Err(Error::InvalidParameter("min_df must be at least 1".into()));
    }
    if !(max_df_fraction > 0.0 && max_df_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "max_df_fraction must lie in (0, 1], got {max_df_fraction}"
        )));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        let unique: HashSet<&str> = doc.tokens.iter().map(String::as_str).collect();
        for t in unique {
            *df.entry(t).or_default() += 1;
        }
    }
    let m = docs.len();
    let (terms, dfs): (Vec<String>, Vec<usize>) = df
        .into_iter()
        .filter(|&(_, d)| d >= min_df && d as f64 / m as f64 <= max_df_fraction)
        .map(|(t, d)| (t.to_owned(), d))
        .unzip();
    if terms.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    Vocabulary::from_parts(terms, dfs, m)
}

/// Sparse term counts sorted by term index, out-of-vocabulary tokens dropped.
pub fn to_bow(tokens: &[String], vocab: &Vocabulary) -> Vec<(usize, u32)> {
    let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
    for i in vocab.encode(tokens) {
        *counts.entry(i).or_default() += 1;
    }
    counts.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BowDocument {
    pub id: String,
    pub counts: Vec<(usize, u32)>,
}

impl BowDocument {
    pub fn len(&self) -> usize {
        self.counts.iter().map(|&(_, c)| c as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Document-term counts over a shared vocabulary, in corpus order.
#[derive(Debug, Clone)]
pub struct BowCorpus {
    docs: Vec<BowDocument>,
    vocab: Arc<Vocabulary>,
}

impl BowCorpus {
    pub fn new(docs: &[ProcessedDocument], vocab: Arc<Vocabulary>) -> Self {
        let docs = docs
            .iter()
            .map(|d| BowDocument {
                id: d.id.clone(),
                counts: to_bow(&d.tokens, &vocab),
            })
            .collect();
        BowCorpus { docs, vocab }
    }

    /// Builds a corpus from raw counts, validating indices and counts.
    pub fn from_counts(docs: Vec<BowDocument>, vocab: Arc<Vocabulary>) -> Result<Self> {
        for d in &docs {
            for w in d.counts.windows(2) {
                if w[0].0 >= w[1].0 {
                    return Err(Error::InvalidParameter(format!(
                        "document `{}` counts are not strictly sorted by term index",
                        d.id
                    )));
                }
            }
            for &(t, c) in &d.counts {
                if t >= vocab.len() {
                    return Err(Error::IndexOutOfRange {
                        index: t,
                        len: vocab.len(),
                    });
                }
                if c == 0 {
                    return Err(Error::InvalidParameter(format!(
                        "document `{}` has a zero count for term {t}",
                        d.id
                    )));
                }
            }
        }
        Ok(BowCorpus { docs, vocab })
    }

    pub fn docs(&self) -> &[BowDocument] {
        &self.docs
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.docs.iter().map(BowDocument::len).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.id.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, tokens: &[&str]) -> ProcessedDocument {
        ProcessedDocument {
            id: id.into(),
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn vocabulary_examples() {
        let docs = [doc("1", &["a", "b"]), doc("2", &["a"])];
        let v = build_vocabulary(&docs, 1, 1.0).unwrap();
        assert_eq!(v.terms(), ["a", "b"]);
        assert_eq!(v.index_of("b"), Some(1));

        let v = build_vocabulary(&docs, 2, 1.0).unwrap();
        assert_eq!(v.terms(), ["a"]);

        let docs = [
            doc("1", &["x", "y"]),
            doc("2", &["x"]),
            doc("3", &["x", "z"]),
        ];
        let v = build_vocabulary(&docs, 1, 0.5).unwrap();
        assert_eq!(v.index_of("x"), None);
        assert_eq!(v.terms(), ["y", "z"]);
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        let docs = [doc("1", &["a"]), doc("2", &["b"])];
        assert!(matches!(
            build_vocabulary(&docs, 2, 1.0),
            Err(Error::EmptyVocabulary)
        ));
        assert!(matches!(build_vocabulary(&[], 1, 1.0), Err(Error::EmptyVocabulary)));
    }

    #[test]
    fn parameter_validation() {
        let docs = [doc("1", &["a"])];
        assert!(build_vocabulary(&docs, 0, 1.0).is_err());
        assert!(build_vocabulary(&docs, 1, 0.0).is_err());
        assert!(build_vocabulary(&docs, 1, 1.5).is_err());
    }

    #[test]
    fn bow_examples() {
        let docs = [doc("1", &["a", "b"]), doc("2", &["a"])];
        let v = build_vocabulary(&docs, 1, 1.0).unwrap();
        let toks = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(to_bow(&toks(&["a", "b", "a"]), &v), vec![(0, 2), (1, 1)]);
        assert_eq!(to_bow(&toks(&["z"]), &v), vec![]);
        assert_eq!(to_bow(&toks(&["b", "a"]), &v), vec![(0, 1), (1, 1)]);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let v = Vocabulary::from_parts(vec!["a".into(), "b".into()], vec![2, 1], 2).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"{"terms":["a","b"],"df":[2,1],"num_docs":2}"#);
        let back: Vocabulary = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
        assert!(serde_json::from_str::<Vocabulary>(r#"{"terms":["a"],"df":[3],"num_docs":2}"#).is_err());
        assert!(serde_json::from_str::<Vocabulary>(r#"{"terms":["a","a"],"df":[1,1],"num_docs":2}"#).is_err());
    }

    #[test]
    fn from_counts_validates() {
        let v = Arc::new(Vocabulary::from_parts(vec!["a".into()], vec![1], 1).unwrap());
        let bad = |counts| BowCorpus::from_counts(vec![BowDocument { id: "d".into(), counts }], v.clone());
        assert!(bad(vec![(0, 1)]).is_ok());
        assert!(bad(vec![(1, 1)]).is_err());
        assert!(bad(vec![(0, 0)]).is_err());
    }
}
