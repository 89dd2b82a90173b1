use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::sentiment::{Sentiment, N_CLASSES};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SentimentShares {
    pub positive: f64,
    pub negative: f64,
    pub neutral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSentiment {
    pub cluster: usize,
    pub size: usize,
    pub counts: BTreeMap<Sentiment, usize>,
    pub fractions: SentimentShares,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinedRow {
    pub id: String,
    pub cluster: usize,
    pub sentiment: Sentiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinReport {
    pub clusters: Vec<ClusterSentiment>,
    pub rows: Vec<JoinedRow>,
}

/// Per-cluster sentiment distribution. Both inputs must cover the same ids;
/// otherwise the symmetric difference is reported.
pub fn join_topics_sentiments(
    assignments: &[(String, usize)],
    sentiments: &[(String, Sentiment)],
) -> Result<JoinReport> {
    let by_id: HashMap<&str, Sentiment> = sentiments.iter().map(|(id, s)| (id.as_str(), *s)).collect();
    let a_ids: BTreeSet<&str> = assignments.iter().map(|(id, _)| id.as_str()).collect();
    let s_ids: BTreeSet<&str> = by_id.keys().copied().collect();
    if a_ids != s_ids || a_ids.len() != assignments.len() || s_ids.len() != sentiments.len() {
        let diff: Vec<String> = a_ids.symmetric_difference(&s_ids).map(|s| s.to_string()).collect();
        if diff.is_empty() {
            return Err(Error::InvalidParameter("duplicate ids in join inputs".into()));
        }
        return Err(Error::IdMismatch(diff));
    }
    if a_ids.is_empty() {
        return Err(Error::IdMismatch(Vec::new()));
    }

    let mut tallies: BTreeMap<usize, [usize; N_CLASSES]> = BTreeMap::new();
    let rows: Vec<JoinedRow> = assignments
        .iter()
        .map(|(id, c)| {
            let s = by_id[id.as_str()];
            tallies.entry(*c).or_default()[s.index()] += 1;
            JoinedRow {
                id: id.clone(),
                cluster: *c,
                sentiment: s,
            }
        })
        .collect();
    let clusters = tallies
        .into_iter()
        .map(|(cluster, t)| {
            let size: usize = t.iter().sum();
            let f = |i: usize| t[i] as f64 / size as f64;
            ClusterSentiment {
                cluster,
                size,
                counts: Sentiment::ALL.iter().map(|s| (*s, t[s.index()])).collect(),
                fractions: SentimentShares {
                    positive: f(0),
                    negative: f(1),
                    neutral: f(2),
                },
            }
        })
        .collect();
    Ok(JoinReport { clusters, rows })
}
