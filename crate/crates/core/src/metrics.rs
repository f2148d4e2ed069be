//! Text metrics: tokenization, sentence BLEU, cosine similarity and the
//! change score used for convergence detection.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ToolDocumentation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        EmbeddingVector { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl From<Vec<f64>> for EmbeddingVector {
    fn from(values: Vec<f64>) -> Self {
        EmbeddingVector::new(values)
    }
}

/// Lowercased tokens; only [`tokenize`] builds one.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    tokens: Vec<String>,
}

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Lowercases, splits on whitespace and emits every character that is
/// neither alphanumeric nor whitespace as its own token.
pub fn tokenize(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            word.extend(ch.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            tokens.push(ch.to_lowercase().collect());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    TokenSequence { tokens }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Unsmoothed sentence BLEU with the n-gram order capped at
/// `min(4, candidate length)`.
///
/// Any zero clipped precision gives 0. An empty candidate or reference
/// scores 0.
pub fn sentence_bleu(candidate: &TokenSequence, reference: &TokenSequence) -> f64 {
    let (c, r) = (candidate.tokens(), reference.tokens());
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let max_n = c.len().min(4);
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand = ngram_counts(c, n);
        let refc = ngram_counts(r, n);
        let clipped: usize = cand
            .iter()
            .map(|(gram, &count)| count.min(refc.get(gram).copied().unwrap_or(0)))
            .sum();
        if clipped == 0 {
            return 0.0;
        }
        let total = c.len() + 1 - n;
        log_sum += (clipped as f64 / total as f64).ln();
    }
    let geo_mean = (log_sum / max_n as f64).exp();
    let bp = if c.len() >= r.len() {
        1.0
    } else {
        (1.0 - r.len() as f64 / c.len() as f64).exp()
    };
    (geo_mean * bp).clamp(0.0, 1.0)
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, MetricError> {
    if a.dim() != b.dim() {
        return Err(MetricError::DimensionMismatch(a.dim(), b.dim()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(MetricError::ZeroNorm);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Largest cosine between `candidate` and any history vector; `-1.0` for an
/// empty history so the diversity gate always passes.
pub fn max_history_similarity(candidate: &EmbeddingVector, history: &[EmbeddingVector]) -> Result<f64, MetricError> {
    let mut best = -1.0_f64;
    for h in history {
        best = best.max(cosine_similarity(candidate, h)?);
    }
    Ok(best)
}

/// Mean of the semantic and lexical similarity. A negative cosine counts as
/// zero so the score stays in `[0, 1]`.
pub fn delta_from_parts(similarity: f64, bleu: f64) -> f64 {
    ((similarity.max(0.0) + bleu) / 2.0).clamp(0.0, 1.0)
}

/// Degree of change between consecutive documentation versions. BLEU takes
/// the current version as candidate and the previous one as reference.
pub fn change_score(
    doc_curr: &ToolDocumentation,
    doc_prev: &ToolDocumentation,
    emb_curr: &EmbeddingVector,
    emb_prev: &EmbeddingVector,
) -> Result<f64, MetricError> {
    let sim = cosine_similarity(emb_curr, emb_prev)?;
    let bleu = sentence_bleu(&tokenize(&doc_curr.render()), &tokenize(&doc_prev.render()));
    Ok(delta_from_parts(sim, bleu))
}
