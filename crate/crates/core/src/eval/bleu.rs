//! Self-BLEU: every sequence scored by BLEU against all the others.
//!
//! BLEU-n uses uniform weights over orders `1..=n`, clipped counts against the
//! per-n-gram maximum over references and the closest-reference-length brevity
//! penalty. A zero unigram match gives 0; zero matches at higher orders are
//! replaced by 0.1 so short sequences still score.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::attr::{Attribute, PerAttr};
use crate::error::{Error, Result};

const EPSILON: f64 = 0.1;

fn ngram_counts<T: Hash + Eq + Clone>(seq: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if seq.len() >= n {
        for g in seq.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Closest reference length to `c`; ties go to the shorter reference.
fn closest_ref_len(c: usize, refs: impl Iterator<Item = usize>) -> usize {
    refs.min_by_key(|&r| ((r as i64 - c as i64).abs(), r)).unwrap_or(c)
}

fn combine(matches: &[usize], totals: &[usize], c: usize, r: usize) -> f64 {
    if c == 0 || matches[0] == 0 {
        return 0.0;
    }
    let n = matches.len();
    let log_p: f64 = matches
        .iter()
        .zip(totals)
        .map(|(&m, &t)| {
            let num = if m == 0 { EPSILON } else { m as f64 };
            (num / t.max(1) as f64).ln()
        })
        .sum::<f64>()
        / n as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * log_p.exp()
}

/// BLEU-`max_n` of `hypothesis` against `references`.
pub fn sentence_bleu<T: Hash + Eq + Clone>(hypothesis: &[T], references: &[&[T]], max_n: usize) -> f64 {
    let mut matches = vec![0; max_n];
    let mut totals = vec![0; max_n];
    for n in 1..=max_n {
        let hyp = ngram_counts(hypothesis, n);
        let ref_counts: Vec<_> = references.iter().map(|r| ngram_counts(r, n)).collect();
        for (g, &c) in &hyp {
            let best = ref_counts.iter().map(|rc| rc.get(g).copied().unwrap_or(0)).max().unwrap_or(0);
            matches[n - 1] += c.min(best);
            totals[n - 1] += c;
        }
    }
    let r = closest_ref_len(hypothesis.len(), references.iter().map(|r| r.len()));
    combine(&matches, &totals, hypothesis.len(), r)
}

/// Top two counts of one n-gram across the corpus, with the owner of the top.
#[derive(Clone, Copy)]
struct Top2 {
    best: usize,
    owner: usize,
    second: usize,
}

/// Self-BLEU scores for `n = 1..=max_n`.
///
/// ```
/// use conl2m::eval::self_bleu;
///
/// let same = vec![vec![1, 2, 3, 4]; 3];
/// assert_eq!(self_bleu(&same, 4).unwrap(), vec![1.0; 4]);
/// let disjoint = vec![vec![1, 2, 3], vec![4, 5, 6]];
/// assert_eq!(self_bleu(&disjoint, 2).unwrap(), vec![0.0, 0.0]);
/// ```
pub fn self_bleu<T: Hash + Eq + Clone>(corpus: &[Vec<T>], max_n: usize) -> Result<Vec<f64>> {
    if corpus.len() < 2 {
        return Err(Error::TooFewSamples {
            found: corpus.len(),
            needed: 2,
        });
    }
    if max_n == 0 {
        return Err(Error::InvalidConfig("max_n must be at least 1".into()));
    }
    // matches[i][n-1], totals[i][n-1]
    let mut matches = vec![vec![0usize; max_n]; corpus.len()];
    let mut totals = vec![vec![0usize; max_n]; corpus.len()];
    for n in 1..=max_n {
        let counts: Vec<_> = corpus.iter().map(|s| ngram_counts(s, n)).collect();
        let mut top: HashMap<&[T], Top2> = HashMap::new();
        for (i, c) in counts.iter().enumerate() {
            for (&g, &k) in c {
                let e = top.entry(g).or_insert(Top2 {
                    best: 0,
                    owner: usize::MAX,
                    second: 0,
                });
                if k > e.best {
                    e.second = e.best;
                    e.best = k;
                    e.owner = i;
                } else if k > e.second {
                    e.second = k;
                }
            }
        }
        for (i, c) in counts.iter().enumerate() {
            for (g, &k) in c {
                let t = top[g];
                let best_other = if t.owner == i { t.second } else { t.best };
                matches[i][n - 1] += k.min(best_other);
                totals[i][n - 1] += k;
            }
        }
    }
    let lens: Vec<usize> = corpus.iter().map(Vec::len).collect();
    let mut scores = vec![0.0; max_n];
    for i in 0..corpus.len() {
        let others = lens.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &l)| l);
        let r = closest_ref_len(lens[i], others);
        for n in 1..=max_n {
            scores[n - 1] += combine(&matches[i][..n], &totals[i][..n], lens[i], r);
        }
    }
    Ok(scores.into_iter().map(|s| s / corpus.len() as f64).collect())
}

/// Self-BLEU per attribute and over whole (pitch, duration, rest) triplets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfBleuReport {
    pub max_n: usize,
    pub per_attribute: PerAttr<Vec<f64>>,
    pub combined: Vec<f64>,
}

/// `tokens[i]` holds the class indices of sequence `i` per attribute.
pub fn self_bleu_report(tokens: &[PerAttr<Vec<usize>>], max_n: usize) -> Result<SelfBleuReport> {
    let per_attribute = PerAttr::new((), (), ()).try_map(|a, _| {
        let corpus: Vec<Vec<usize>> = tokens.iter().map(|t| t[a].clone()).collect();
        self_bleu(&corpus, max_n)
    })?;
    let combined_corpus: Vec<Vec<(usize, usize, usize)>> = tokens
        .iter()
        .map(|t| {
            (0..t[Attribute::Pitch].len())
                .map(|i| (t[Attribute::Pitch][i], t[Attribute::Duration][i], t[Attribute::Rest][i]))
                .collect()
        })
        .collect();
    Ok(SelfBleuReport {
        max_n,
        per_attribute,
        combined: self_bleu(&combined_corpus, max_n)?,
    })
}
