//! Skip-gram with negative sampling, trained by plain SGD.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::table::EmbeddingTable;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::tape::sigmoid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 50,
            window: 3,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_learning_rate: 1e-4,
            seed: 0,
        }
    }
}

/// Unigram^0.75 sampler over vocabulary rows.
struct NegativeTable {
    cumulative: Vec<f64>,
}

impl NegativeTable {
    fn new(counts: &[usize]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        NegativeTable { cumulative }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let x = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= x).min(self.cumulative.len() - 1)
    }
}

/// Trains input vectors for every token of `corpus`; the returned table holds them.
///
/// Deterministic for a fixed `cfg.seed`. Tokens are ordered lexicographically.
pub fn train_skipgram(corpus: &[Vec<String>], cfg: &SkipGramConfig) -> Result<EmbeddingTable> {
    if cfg.dim < 2 {
        return Err(Error::InvalidConfig(format!("embedding dim {} < 2", cfg.dim)));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for seq in corpus {
        for tok in seq {
            *counts.entry(tok.as_str()).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let tokens: Vec<String> = counts.keys().map(|s| s.to_string()).collect();
    let index: BTreeMap<&str, usize> = counts.keys().enumerate().map(|(i, &t)| (t, i)).collect();
    let freq: Vec<usize> = counts.values().copied().collect();
    let ids: Vec<Vec<usize>> = corpus
        .iter()
        .map(|seq| seq.iter().map(|t| index[t.as_str()]).collect())
        .collect();

    let v = tokens.len();
    let d = cfg.dim;
    let mut init_rng = stream_rng(cfg.seed, "skipgram-init", 0);
    let mut w_in = Array2::from_shape_fn((v, d), |_| (init_rng.random::<f64>() - 0.5) / d as f64);
    let mut w_out = Array2::<f64>::zeros((v, d));

    let negatives = NegativeTable::new(&freq);
    let total_positions: usize = ids.iter().map(Vec::len).sum::<usize>() * cfg.epochs;
    let mut seen = 0usize;
    let mut grad_in = vec![0.0; d];

    for epoch in 0..cfg.epochs {
        let mut rng = stream_rng(cfg.seed, "skipgram-negatives", epoch as u64);
        for seq in &ids {
            for (pos, &center) in seq.iter().enumerate() {
                let progress = seen as f64 / total_positions.max(1) as f64;
                let lr = (cfg.learning_rate * (1.0 - progress)).max(cfg.min_learning_rate);
                seen += 1;
                let lo = pos.saturating_sub(cfg.window);
                let hi = (pos + cfg.window + 1).min(seq.len());
                for (ctx_pos, &context) in seq.iter().enumerate().take(hi).skip(lo) {
                    if ctx_pos == pos {
                        continue;
                    }
                    grad_in.iter_mut().for_each(|g| *g = 0.0);
                    for k in 0..=cfg.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let t = negatives.sample(&mut rng);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let dot: f64 = w_in.row(center).dot(&w_out.row(target));
                        let g = (label - sigmoid(dot)) * lr;
                        for j in 0..d {
                            grad_in[j] += g * w_out[[target, j]];
                            w_out[[target, j]] += g * w_in[[center, j]];
                        }
                    }
                    for j in 0..d {
                        w_in[[center, j]] += grad_in[j];
                    }
                }
            }
        }
    }
    EmbeddingTable::new(tokens, w_in)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn cosine(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
        a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
    }

    #[test]
    fn co_occurring_tokens_end_up_closer_than_average() {
        let mut corpus = Vec::new();
        for _ in 0..40 {
            corpus.push(toks("a b a b a b a b"));
            corpus.push(toks("c c c c c c"));
        }
        let cfg = SkipGramConfig {
            dim: 8,
            epochs: 20,
            seed: 11,
            ..Default::default()
        };
        let table = train_skipgram(&corpus, &cfg).unwrap();
        let row = |t: &str| table.vector(t).unwrap();
        // every unordered pair, enumerated
        let names = ["a", "b", "c"];
        let mut sims = Vec::new();
        for i in 0..3 {
            for j in i + 1..3 {
                sims.push(((names[i], names[j]), cosine(row(names[i]), row(names[j]))));
            }
        }
        let mean = sims.iter().map(|(_, s)| s).sum::<f64>() / sims.len() as f64;
        let ab = sims.iter().find(|(p, _)| *p == ("a", "b")).unwrap().1;
        assert!(ab > mean, "ab {ab} mean {mean} all {sims:?}");
    }

    #[test]
    fn single_token_corpus_keeps_initial_vector() {
        let cfg = SkipGramConfig {
            dim: 4,
            seed: 5,
            ..Default::default()
        };
        let table = train_skipgram(&[toks("solo")], &cfg).unwrap();
        assert_eq!(table.len(), 1);
        let mut init_rng = stream_rng(5, "skipgram-init", 0);
        let expected: Vec<f64> = (0..4).map(|_| (init_rng.random::<f64>() - 0.5) / 4.0).collect();
        assert_eq!(table.vector("solo").unwrap().to_vec(), expected);
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = vec![toks("la la na da la"), toks("da na na la")];
        let cfg = SkipGramConfig {
            dim: 6,
            seed: 2,
            ..Default::default()
        };
        assert_eq!(train_skipgram(&corpus, &cfg).unwrap(), train_skipgram(&corpus, &cfg).unwrap());
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            train_skipgram(&[], &SkipGramConfig::default()),
            Err(Error::EmptyCorpus)
        ));
    }
}
