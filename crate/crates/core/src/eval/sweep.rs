use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::melody::PairedSample;
use crate::model::{DecodeStrategy, GenerationInput, Model};
use crate::style::{StyleControls, StyleKey};

/// Boxplot summary: linearly interpolated quartiles and whiskers at the most
/// extreme data within 1.5 IQR of the box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl BoxSummary {
    /// `None` for an empty slice.
    ///
    /// ```
    /// use conl2m::eval::BoxSummary;
    ///
    /// let b = BoxSummary::of(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
    /// assert_eq!((b.q1, b.median, b.q3), (2.0, 3.0, 4.0));
    /// assert_eq!((b.whisker_low, b.whisker_high), (1.0, 4.0));
    /// ```
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q1 = quantile(&v, 0.25);
        let q3 = quantile(&v, 0.75);
        let iqr = q3 - q1;
        let lo_fence = q1 - 1.5 * iqr;
        let hi_fence = q3 + 1.5 * iqr;
        Some(BoxSummary {
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v[0],
            q1,
            median: quantile(&v, 0.5),
            q3,
            max: v[v.len() - 1],
            whisker_low: v.iter().copied().find(|&x| x >= lo_fence).unwrap_or(v[0]),
            whisker_high: v.iter().rev().copied().find(|&x| x <= hi_fence).unwrap_or(v[v.len() - 1]),
        })
    }
}

/// Ranks starting at 1; ties share their average rank.
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson on average ranks). `None` with fewer
/// than two points, mismatched lengths or a constant input.
///
/// ```
/// use conl2m::eval::spearman;
///
/// assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 40.0]), Some(1.0));
/// assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
/// assert_eq!(spearman(&[1.0], &[1.0]), None);
/// ```
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Generated distributions at one control level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub candidate: f64,
    /// The swept feature realized by each generated sequence (e.g. its pitch average).
    pub feature: Option<BoxSummary>,
    /// Every generated value of the swept attribute, pooled over sequences.
    pub attribute: Option<BoxSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub key: StyleKey,
    pub candidates: Vec<f64>,
    pub fixed_value: f64,
    pub sequences: usize,
    pub seed: u64,
    pub points: Vec<SweepPoint>,
    /// Spearman correlation of candidate level against the per-candidate mean
    /// realized feature; absent when undefined.
    pub spearman: Option<f64>,
}

/// Generates one melody per lyric for each candidate level of `key`, every
/// other control held at `fixed_value`.
pub fn controllability_sweep(
    model: &Model,
    lyrics: &[PairedSample],
    key: StyleKey,
    candidates: &[f64],
    fixed_value: f64,
    seed: u64,
) -> Result<SweepResult> {
    if lyrics.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let embedded: Vec<_> = lyrics.iter().map(|s| model.assets.embed(&s.lyrics)).collect();
    let mut points = Vec::with_capacity(candidates.len());
    for &c in candidates {
        let controls = StyleControls::uniform(fixed_value).with(key, c);
        let rse = model.assets.control_rse(&controls)?;
        let inputs: Vec<GenerationInput> = embedded
            .iter()
            .map(|x| GenerationInput {
                lyrics: x.clone(),
                rse: rse.clone(),
            })
            .collect();
        let gens = model.generate_batch(&inputs, DecodeStrategy::Sample, seed)?;
        let feature: Vec<f64> = gens
            .iter()
            .filter_map(|g| g.features.as_ref().map(|f| f.value(key)))
            .collect();
        let attribute: Vec<f64> = gens.iter().flat_map(|g| g.melody.values(key.attribute)).collect();
        points.push(SweepPoint {
            candidate: c,
            feature: BoxSummary::of(&feature),
            attribute: BoxSummary::of(&attribute),
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter_map(|p| Some((p.candidate, p.feature?.mean)))
        .unzip();
    Ok(SweepResult {
        key,
        candidates: candidates.to_vec(),
        fixed_value,
        sequences: lyrics.len(),
        seed,
        points,
        spearman: spearman(&xs, &ys),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 2.0, 3.0]).unwrap();
        assert!((r - 0.9486832980505138).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), None);
    }

    #[test]
    fn quartiles_interpolate() {
        let b = BoxSummary::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (1.75, 2.5, 3.25));
        assert_eq!(b.mean, 2.5);
        assert!(BoxSummary::of(&[]).is_none());
    }
}
