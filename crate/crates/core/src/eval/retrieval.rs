//! Tool retrieval: Okapi BM25 ranking and binary-gain NDCG@k.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::metrics::tokenize;
use crate::par::{map_ordered, Execution};

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusDoc {
    pub name: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusQuery {
    pub query_id: String,
    pub text: String,
}

/// One line of a qrels file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRelevance {
    pub query_id: String,
    pub relevant: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalCorpus {
    docs: Vec<CorpusDoc>,
    queries: Vec<CorpusQuery>,
    qrels: BTreeMap<String, BTreeSet<String>>,
}

impl RetrievalCorpus {
    /// Rejects an empty document list, duplicate query ids, and qrels that
    /// refer to unknown queries. Queries without qrels have no relevant tools.
    pub fn new(docs: Vec<CorpusDoc>, queries: Vec<CorpusQuery>, qrels: Vec<QueryRelevance>) -> Result<Self, EvalError> {
        if docs.is_empty() {
            return Err(EvalError::EmptyCorpus);
        }
        let mut ids = HashSet::new();
        for q in &queries {
            if !ids.insert(q.query_id.as_str()) {
                return Err(EvalError::DuplicateQuery(q.query_id.clone()));
            }
        }
        let mut map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for r in qrels {
            if !ids.contains(r.query_id.as_str()) {
                return Err(EvalError::UnknownQuery(r.query_id));
            }
            map.entry(r.query_id).or_default().extend(r.relevant);
        }
        Ok(RetrievalCorpus {
            docs,
            queries,
            qrels: map,
        })
    }

    pub fn docs(&self) -> &[CorpusDoc] {
        &self.docs
    }

    pub fn queries(&self) -> &[CorpusQuery] {
        &self.queries
    }

    pub fn relevant(&self, query_id: &str) -> BTreeSet<String> {
        self.qrels.get(query_id).cloned().unwrap_or_default()
    }

    fn query_text(&self, query_id: &str) -> Result<&str, EvalError> {
        self.queries
            .iter()
            .find(|q| q.query_id == query_id)
            .map(|q| q.text.as_str())
            .ok_or_else(|| EvalError::UnknownQuery(query_id.to_string()))
    }
}

/// Scores every corpus document for a query; higher is more relevant.
/// Dense retrievers plug in by implementing this.
pub trait Scorer: Sync {
    /// One score per document, in corpus order.
    fn scores(&self, query: &str) -> Vec<f64>;
}

/// Inverted-index Okapi BM25.
#[derive(Debug, Clone)]
pub struct Bm25Scorer {
    doc_lengths: Vec<f64>,
    avg_length: f64,
    postings: HashMap<String, Vec<(usize, f64)>>,
    n_docs: f64,
}

impl Bm25Scorer {
    pub fn new(docs: &[CorpusDoc]) -> Self {
        let mut postings: HashMap<String, Vec<(usize, f64)>> = HashMap::new();
        let mut doc_lengths = Vec::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            let tokens = tokenize(&doc.text);
            doc_lengths.push(tokens.len() as f64);
            let mut tf: HashMap<&str, f64> = HashMap::new();
            for t in tokens.tokens() {
                *tf.entry(t.as_str()).or_default() += 1.0;
            }
            for (term, count) in tf {
                postings.entry(term.to_string()).or_default().push((i, count));
            }
        }
        let total: f64 = doc_lengths.iter().sum();
        let avg_length = if docs.is_empty() {
            0.0
        } else {
            total / docs.len() as f64
        };
        Bm25Scorer {
            doc_lengths,
            avg_length,
            postings,
            n_docs: docs.len() as f64,
        }
    }

    fn idf(&self, df: f64) -> f64 {
        ((self.n_docs - df + 0.5) / (df + 0.5) + 1.0).ln()
    }
}

impl Scorer for Bm25Scorer {
    fn scores(&self, query: &str) -> Vec<f64> {
        let mut scores = vec![0.0; self.doc_lengths.len()];
        if self.avg_length == 0.0 {
            return scores;
        }
        // Repeated query terms contribute once per occurrence.
        for term in tokenize(query).tokens() {
            let Some(posting) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(posting.len() as f64);
            for &(doc, tf) in posting {
                let norm = 1.0 - BM25_B + BM25_B * self.doc_lengths[doc] / self.avg_length;
                scores[doc] += idf * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * norm);
            }
        }
        scores
    }
}

/// All documents as `(name, score)`, by descending score then name ascending.
pub fn rank_with(
    scorer: &dyn Scorer,
    corpus: &RetrievalCorpus,
    query_id: &str,
) -> Result<Vec<(String, f64)>, EvalError> {
    let text = corpus.query_text(query_id)?;
    let scores = scorer.scores(text);
    let mut ranked: Vec<(String, f64)> = corpus
        .docs
        .iter()
        .zip(scores)
        .map(|(d, s)| (d.name.clone(), s))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked)
}

/// BM25 ranking of every corpus document for `query_id`.
pub fn bm25_rank(corpus: &RetrievalCorpus, query_id: &str) -> Result<Vec<String>, EvalError> {
    let scorer = Bm25Scorer::new(&corpus.docs);
    Ok(rank_with(&scorer, corpus, query_id)?
        .into_iter()
        .map(|(n, _)| n)
        .collect())
}

/// Binary-gain NDCG with base-2 discount and ranks starting at 1. An empty
/// relevant set, or `k == 0`, scores 0.
pub fn ndcg_at_k(ranked: &[String], relevant: &BTreeSet<String>, k: usize) -> f64 {
    if relevant.is_empty() || k == 0 {
        return 0.0;
    }
    let gain = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, name)| relevant.contains(*name))
        .map(|(i, _)| gain(i + 1))
        .sum();
    let idcg: f64 = (1..=k.min(relevant.len())).map(gain).sum();
    dcg / idcg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScores {
    pub query_id: String,
    /// Keyed `ndcg@k`.
    pub ndcg: BTreeMap<String, f64>,
    pub top: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    /// Mean over queries, keyed `ndcg@k`.
    pub mean: BTreeMap<String, f64>,
    pub queries: Vec<QueryScores>,
}

/// Mean NDCG@k over every corpus query for each cutoff in `ks`.
pub fn evaluate_retrieval(
    corpus: &RetrievalCorpus,
    scorer: &dyn Scorer,
    ks: &[usize],
    exec: Execution,
) -> Result<RetrievalReport, EvalError> {
    if ks.contains(&0) {
        return Err(EvalError::InvalidCutoff);
    }
    let max_k = ks.iter().copied().max().unwrap_or(0);
    let per_query = map_ordered(&corpus.queries, exec, |q| -> Result<QueryScores, EvalError> {
        let ranked: Vec<String> = rank_with(scorer, corpus, &q.query_id)?
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        let relevant = corpus.relevant(&q.query_id);
        let ndcg = ks
            .iter()
            .map(|&k| (format!("ndcg@{k}"), ndcg_at_k(&ranked, &relevant, k)))
            .collect();
        Ok(QueryScores {
            query_id: q.query_id.clone(),
            ndcg,
            top: ranked.into_iter().take(max_k).collect(),
        })
    });
    let queries = per_query.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mean = ks
        .iter()
        .map(|&k| {
            let key = format!("ndcg@{k}");
            let avg = if queries.is_empty() {
                0.0
            } else {
                queries.iter().map(|q| q.ndcg[&key]).sum::<f64>() / queries.len() as f64
            };
            (key, avg)
        })
        .collect();
    Ok(RetrievalReport { mean, queries })
}
