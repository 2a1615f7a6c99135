//! In-process scorers: uniform, Laplace-smoothed bigram, and a
//! deterministic hash scorer for reproducible plumbing tests.

use std::collections::HashMap;
use std::path::Path;

use super::{ScoreRequest, ScoreResponse, Scorer};
use crate::lattice::{BOS, EOS, UNK};
use crate::Result;

/// Every token costs `ln(vocab_size)` regardless of context.
#[derive(Debug, Clone)]
pub struct UniformScorer {
    vocab_size: usize,
    cost: f64,
}

impl UniformScorer {
    pub fn new(vocab_size: usize) -> Self {
        let v = vocab_size.max(1);
        UniformScorer {
            vocab_size: v,
            cost: (v as f64).ln(),
        }
    }
}

impl Scorer for UniformScorer {
    fn kind(&self) -> &str {
        "uniform"
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>> {
        Ok(requests
            .iter()
            .map(|req| ScoreResponse {
                id: req.id,
                costs: vec![self.cost; req.tokens.len() + 1],
            })
            .collect())
    }
}

/// Laplace-smoothed bigram LM trained from a plain text file, one
/// sentence per line.
///
/// With predictable vocabulary `V` (training words plus `<unk>` and
/// `</s>`), `P(w | h) = (count(h, w) + 1) / (count(h) + |V|)`; unseen
/// histories fall back to the uniform `1 / |V|`.
#[derive(Debug, Clone)]
pub struct BigramScorer {
    vocab: HashMap<String, usize>,
    /// Prediction targets: vocabulary words, `<unk>`, `</s>`.
    out_vocab_size: usize,
    /// bigram[(history, word)] counts; histories include `<s>`.
    bigrams: HashMap<(String, String), u64>,
    history_totals: HashMap<String, u64>,
}

impl BigramScorer {
    pub fn train(text: &str) -> Self {
        let mut vocab: HashMap<String, usize> = HashMap::new();
        let mut bigrams: HashMap<(String, String), u64> = HashMap::new();
        let mut history_totals: HashMap<String, u64> = HashMap::new();
        for line in text.lines() {
            let words: Vec<&str> = line.split_whitespace().collect();
            if words.is_empty() {
                continue;
            }
            let mut prev = BOS.to_string();
            for &w in &words {
                let next_id = vocab.len();
                vocab.entry(w.to_string()).or_insert(next_id);
                *bigrams.entry((prev.clone(), w.to_string())).or_insert(0) += 1;
                *history_totals.entry(prev).or_insert(0) += 1;
                prev = w.to_string();
            }
            *bigrams.entry((prev.clone(), EOS.to_string())).or_insert(0) += 1;
            *history_totals.entry(prev).or_insert(0) += 1;
        }
        let out_vocab_size = vocab.len() + 2; // + <unk> + </s>
        BigramScorer {
            vocab,
            out_vocab_size,
            bigrams,
            history_totals,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::train(&std::fs::read_to_string(path)?))
    }

    fn token_cost(&self, history: &str, word: &str) -> f64 {
        let count = self
            .bigrams
            .get(&(history.to_string(), word.to_string()))
            .copied()
            .unwrap_or(0);
        let total = self.history_totals.get(history).copied().unwrap_or(0);
        let p = (count as f64 + 1.0) / (total as f64 + self.out_vocab_size as f64);
        -p.ln()
    }

    /// Cost of `word` after an explicit context (last word matters).
    pub fn cost_in_context(&self, context: &[&str], word: &str) -> f64 {
        let history = context.last().map(|w| self.normalize(w)).unwrap_or(BOS);
        self.token_cost(history, self.normalize(word))
    }

    fn normalize<'a>(&self, word: &'a str) -> &'a str {
        if word == UNK || self.vocab.contains_key(word) {
            word
        } else {
            UNK
        }
    }

    /// Per-token costs for one sequence, end-of-sentence included.
    pub fn sequence_costs(&self, tokens: &[String]) -> Vec<f64> {
        let mut costs = Vec::with_capacity(tokens.len() + 1);
        let mut history = BOS.to_string();
        for tok in tokens {
            let w = self.normalize(tok);
            costs.push(self.token_cost(&history, w));
            history = w.to_string();
        }
        costs.push(self.token_cost(&history, EOS));
        costs
    }
}

impl Scorer for BigramScorer {
    fn kind(&self) -> &str {
        "bigram"
    }

    fn vocab_size(&self) -> usize {
        self.out_vocab_size
    }

    fn contains(&self, word: &str) -> bool {
        word == UNK || self.vocab.contains_key(word)
    }

    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>> {
        Ok(requests
            .iter()
            .map(|req| ScoreResponse {
                id: req.id,
                costs: self.sequence_costs(&req.tokens),
            })
            .collect())
    }
}

/// FNV-1a over bytes: stable across platforms and runs.
pub fn stable_hash64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Deterministic pseudo-LM: the cost of a token is a stable hash of the
/// last `window` context tokens and the word, mapped to [0.5, 10] nats.
/// Context-sensitive (so expansion matters) and open-vocabulary.
#[derive(Debug, Clone)]
pub struct HashScorer {
    window: usize,
}

impl Default for HashScorer {
    fn default() -> Self {
        HashScorer { window: 3 }
    }
}

impl HashScorer {
    pub fn with_window(window: usize) -> Self {
        HashScorer { window: window.max(1) }
    }

    fn token_cost(context: &[&str], word: &str) -> f64 {
        let mut key = Vec::new();
        for c in context {
            key.extend_from_slice(c.as_bytes());
            key.push(0x1f);
        }
        key.push(0x1e);
        key.extend_from_slice(word.as_bytes());
        let h = stable_hash64(&key);
        0.5 + 9.5 * (h as f64 / u64::MAX as f64)
    }

    /// Per-token costs for one sequence, end-of-sentence included.
    pub fn sequence_costs(&self, tokens: &[String]) -> Vec<f64> {
        let mut context: Vec<&str> = vec![BOS];
        let mut costs = Vec::with_capacity(tokens.len() + 1);
        for tok in tokens {
            let from = context.len().saturating_sub(self.window);
            costs.push(Self::token_cost(&context[from..], tok));
            context.push(tok);
        }
        let from = context.len().saturating_sub(self.window);
        costs.push(Self::token_cost(&context[from..], EOS));
        costs
    }

    /// Cost of `word` after an explicit context (sentence start is
    /// implied when the context is shorter than the window).
    pub fn cost_in_context(&self, context: &[&str], word: &str) -> f64 {
        let mut padded: Vec<&str> = vec![BOS];
        padded.extend_from_slice(context);
        let from = padded.len().saturating_sub(self.window);
        Self::token_cost(&padded[from..], word)
    }
}

impl Scorer for HashScorer {
    fn kind(&self) -> &str {
        "hash"
    }

    fn vocab_size(&self) -> usize {
        0
    }

    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>> {
        Ok(requests
            .iter()
            .map(|req| ScoreResponse {
                id: req.id,
                costs: self.sequence_costs(&req.tokens),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bigram_laplace_counts_match_hand_computation() {
        // Two sentences: "a b" and "a c". Vocab {a, b, c}, out vocab
        // {a, b, c, <unk>, </s>} of size 5.
        let scorer = BigramScorer::train("a b\na c\n");
        let costs = scorer.sequence_costs(&["a".to_string(), "b".to_string()]);
        // P(a | <s>) = (2 + 1) / (2 + 5) = 3/7
        assert!((costs[0] - -(3.0f64 / 7.0).ln()).abs() < 1e-12);
        // P(b | a) = (1 + 1) / (2 + 5) = 2/7
        assert!((costs[1] - -(2.0f64 / 7.0).ln()).abs() < 1e-12);
        // P(</s> | b) = (1 + 1) / (1 + 5) = 1/3
        assert!((costs[2] - -(1.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn bigram_maps_oov_to_unk() {
        let scorer = BigramScorer::train("a b\n");
        assert!(!scorer.contains("zzz"));
        let direct = scorer.sequence_costs(&["zzz".to_string()]);
        let unk = scorer.sequence_costs(&[UNK.to_string()]);
        assert_eq!(direct, unk);
    }

    #[test]
    fn hash_scorer_is_deterministic_and_bounded() {
        let scorer = HashScorer::default();
        let tokens: Vec<String> = ["the", "cat", "sat"].iter().map(|s| s.to_string()).collect();
        let a = scorer.sequence_costs(&tokens);
        let b = scorer.sequence_costs(&tokens);
        assert_eq!(a, b);
        for c in &a {
            assert!(*c >= 0.5 && *c <= 10.0);
        }
    }

    #[test]
    fn hash_scorer_depends_on_context() {
        let scorer = HashScorer::default();
        let a = scorer.sequence_costs(&["x".to_string(), "same".to_string()]);
        let b = scorer.sequence_costs(&["y".to_string(), "same".to_string()]);
        assert_ne!(a[1], b[1]);
    }

    #[test]
    fn empty_sequence_scores_one_token() {
        for costs in [
            UniformScorer::new(10).score_batch(&[ScoreRequest { id: 0, tokens: vec![] }]),
            BigramScorer::train("a\n").score_batch(&[ScoreRequest { id: 0, tokens: vec![] }]),
            HashScorer::default().score_batch(&[ScoreRequest { id: 0, tokens: vec![] }]),
        ] {
            assert_eq!(costs.unwrap()[0].costs.len(), 1);
        }
    }
}
