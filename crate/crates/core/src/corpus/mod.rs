//! Text preprocessing, vocabulary construction and bag-of-words conversion.
//!
//! [`preprocess`] runs, in order: URL stripping, emoticon replacement,
//! canonicalization, whitespace tokenization, stopword removal and Porter
//! stemming.

mod io;
mod porter;
mod stopwords;
mod text;
mod vocab;

use serde::{Deserialize, Serialize};

pub use io::{read_documents, read_processed_jsonl, write_processed_jsonl};
pub use porter::{stem, stem_fixpoint};
pub use stopwords::{is_stopword, remove_stopwords, STOPWORDS};
pub use text::{canonicalize, replace_emoticons, strip_urls, EMOTICONS};
pub use vocab::{
    build_vocabulary, to_bow, BowCorpus, BowDocument, Vocabulary, DEFAULT_MAX_DF_FRACTION,
    DEFAULT_MIN_DF,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub id: String,
    pub text: String,
}

impl RawDocument {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        RawDocument {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// Tokens of one document; each token matches `[a-z]+`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessedDocument {
    pub id: String,
    pub tokens: Vec<String>,
}

impl ProcessedDocument {
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

/// Full preprocessing of one document.
///
/// Stemming is iterated to a fixed point and stems that land on a stopword
/// are dropped, which makes the pipeline idempotent on its own output.
pub fn preprocess(doc: &RawDocument) -> ProcessedDocument {
    let text = strip_urls(&doc.text);
    let text = replace_emoticons(&text);
    let text = canonicalize(&text);
    let tokens = remove_stopwords(&tokenize(&text))
        .into_iter()
        .map(|t| stem_fixpoint(&t))
        .filter(|t| !is_stopword(t))
        .collect();
    ProcessedDocument {
        id: doc.id.clone(),
        tokens,
    }
}

/// Result of preprocessing a whole corpus.
#[derive(Debug, Clone)]
pub struct PreprocessedCorpus {
    /// Every input document, in input order, including empty ones.
    pub docs: Vec<ProcessedDocument>,
    /// Ids of documents whose token list came out empty.
    pub empty_ids: Vec<String>,
}

impl PreprocessedCorpus {
    /// Documents with at least one token.
    pub fn non_empty(&self) -> Vec<ProcessedDocument> {
        self.docs.iter().filter(|d| !d.is_empty()).cloned().collect()
    }
}

pub fn preprocess_corpus(docs: &[RawDocument]) -> crate::Result<PreprocessedCorpus> {
    let mut seen = std::collections::HashSet::new();
    for d in docs {
        if d.id.is_empty() {
            return Err(crate::Error::InvalidParameter("document id is empty".into()));
        }
        if !seen.insert(d.id.as_str()) {
            return Err(crate::Error::DuplicateId(d.id.clone()));
        }
    }
    let docs: Vec<ProcessedDocument> = docs.iter().map(preprocess).collect();
    let empty_ids: Vec<String> = docs
        .iter()
        .filter(|d| d.is_empty())
        .map(|d| d.id.clone())
        .collect();
    if !empty_ids.is_empty() {
        log::info!("{} documents have no tokens after preprocessing", empty_ids.len());
    }
    Ok(PreprocessedCorpus { docs, empty_ids })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tokens(text: &str) -> Vec<String> {
        preprocess(&RawDocument::new("d", text)).tokens
    }

    #[test]
    fn pipeline_examples() {
        assert_eq!(tokens("I love https://t.co/x :)"), ["love", "smile"]);
        assert!(tokens("").is_empty());
        assert!(tokens("The THE the").is_empty());
    }

    #[test]
    fn pipeline_handles_mixed_input() {
        assert_eq!(
            tokens("Running 5 MILES at www.strava.com!!! :D #fitness"),
            ["run", "mile", "laugh", "fit"]
        );
    }

    #[test]
    fn corpus_rejects_duplicate_and_empty_ids() {
        let dup = [RawDocument::new("a", "x"), RawDocument::new("a", "y")];
        assert!(matches!(preprocess_corpus(&dup), Err(crate::Error::DuplicateId(_))));
        assert!(preprocess_corpus(&[RawDocument::new("", "x")]).is_err());
    }

    #[test]
    fn empty_documents_are_kept_and_flagged() {
        let docs = [RawDocument::new("a", "cats"), RawDocument::new("b", "the")];
        let out = preprocess_corpus(&docs).unwrap();
        assert_eq!(out.docs.len(), 2);
        assert_eq!(out.empty_ids, ["b"]);
        assert_eq!(out.non_empty().len(), 1);
    }
}
