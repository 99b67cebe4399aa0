use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::melody::MelodySequence;
use crate::style::{extract_style_features, StyleKey};

/// How pitch n-gram repetitions are counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepetitionStrategy {
    /// Positions whose n-gram already occurred at an earlier position.
    #[default]
    EarlierOccurrence,
    /// Distinct n-grams that occur more than once.
    DistinctRepeated,
}

/// Corpus means of the seven objective melody metrics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub midi_span: f64,
    pub two_midi_reps: f64,
    pub three_midi_reps: f64,
    pub unique_midi: f64,
    pub restless_notes: f64,
    pub avg_rest: f64,
    pub song_length: f64,
}

impl MetricRecord {
    /// Column names, in table order.
    pub const COLUMNS: [&'static str; 7] = [
        "MIDI Span",
        "2-MIDI Reps",
        "3-MIDI Reps",
        "Unique MIDI",
        "Restless Notes",
        "Avg Rest",
        "Song Length",
    ];

    pub fn values(&self) -> [f64; 7] {
        [
            self.midi_span,
            self.two_midi_reps,
            self.three_midi_reps,
            self.unique_midi,
            self.restless_notes,
            self.avg_rest,
            self.song_length,
        ]
    }

    fn from_values(v: [f64; 7]) -> Self {
        MetricRecord {
            midi_span: v[0],
            two_midi_reps: v[1],
            three_midi_reps: v[2],
            unique_midi: v[3],
            restless_notes: v[4],
            avg_rest: v[5],
            song_length: v[6],
        }
    }
}

/// Repeated pitch n-grams of one sequence.
pub fn ngram_repetitions(pitches: &[u8], n: usize, strategy: RepetitionStrategy) -> usize {
    if n == 0 || pitches.len() < n {
        return 0;
    }
    let grams = pitches.windows(n);
    match strategy {
        RepetitionStrategy::EarlierOccurrence => {
            let mut seen = HashSet::new();
            grams.filter(|g| !seen.insert(*g)).count()
        }
        RepetitionStrategy::DistinctRepeated => {
            let mut counts: HashMap<&[u8], usize> = HashMap::new();
            for g in grams {
                *counts.entry(g).or_default() += 1;
            }
            counts.values().filter(|&&c| c > 1).count()
        }
    }
}

/// The seven metrics of one melody.
pub fn sequence_metrics(m: &MelodySequence, strategy: RepetitionStrategy) -> Result<MetricRecord> {
    if m.is_empty() {
        return Err(Error::EmptySequence);
    }
    let pitches = m.pitches();
    let max = *pitches.iter().max().expect("non-empty");
    let min = *pitches.iter().min().expect("non-empty");
    let unique: HashSet<u8> = pitches.iter().copied().collect();
    Ok(MetricRecord {
        midi_span: f64::from(max - min),
        two_midi_reps: ngram_repetitions(&pitches, 2, strategy) as f64,
        three_midi_reps: ngram_repetitions(&pitches, 3, strategy) as f64,
        unique_midi: unique.len() as f64,
        restless_notes: m.notes.iter().filter(|n| n.rest == 0.0).count() as f64,
        avg_rest: m.notes.iter().map(|n| n.rest).sum::<f64>() / m.len() as f64,
        song_length: m.song_length(),
    })
}

/// Per-sequence metrics averaged over the corpus.
///
/// ```
/// use conl2m::eval::{compute_metrics, RepetitionStrategy};
/// use conl2m::melody::{MelodySequence, NoteEvent};
///
/// let m = MelodySequence::new(vec![NoteEvent::new(60, 1.0, 0.0); 20]);
/// let r = compute_metrics(&[m], RepetitionStrategy::default()).unwrap();
/// assert_eq!((r.midi_span, r.unique_midi, r.restless_notes, r.avg_rest), (0.0, 1.0, 20.0, 0.0));
/// ```
pub fn compute_metrics(corpus: &[MelodySequence], strategy: RepetitionStrategy) -> Result<MetricRecord> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut sum = [0.0; 7];
    for m in corpus {
        for (s, v) in sum.iter_mut().zip(sequence_metrics(m, strategy)?.values()) {
            *s += v;
        }
    }
    Ok(MetricRecord::from_values(sum.map(|s| s / corpus.len() as f64)))
}

/// Mean squared difference of each of the nine style features over aligned
/// pairs, in radar order (PR, PA, PV, DR, DA, DV, RR, RA, RV).
pub fn style_mse(generated: &[MelodySequence], reference: &[MelodySequence]) -> Result<[f64; 9]> {
    if generated.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            what: "paired corpora".into(),
            expected: reference.len(),
            found: generated.len(),
        });
    }
    if generated.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut sum = [0.0; 9];
    for (g, r) in generated.iter().zip(reference) {
        let fg = extract_style_features(g)?;
        let fr = extract_style_features(r)?;
        for (i, key) in StyleKey::all().into_iter().enumerate() {
            sum[i] += (fg.value(key) - fr.value(key)).powi(2);
        }
    }
    Ok(sum.map(|s| s / generated.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::melody::NoteEvent;

    #[test]
    fn repetition_strategies() {
        let p = [60, 62, 60, 62, 60, 62];
        // bigrams: 60-62, 62-60, 60-62*, 62-60*, 60-62*
        assert_eq!(ngram_repetitions(&p, 2, RepetitionStrategy::EarlierOccurrence), 3);
        assert_eq!(ngram_repetitions(&p, 2, RepetitionStrategy::DistinctRepeated), 2);
        assert_eq!(ngram_repetitions(&p, 3, RepetitionStrategy::EarlierOccurrence), 2);
        assert_eq!(ngram_repetitions(&[60], 2, RepetitionStrategy::EarlierOccurrence), 0);
    }

    #[test]
    fn single_pair_pitch_shift() {
        let a = MelodySequence::new(vec![NoteEvent::new(60, 1.0, 0.0), NoteEvent::new(62, 1.0, 0.5)]);
        let b = MelodySequence::new(vec![NoteEvent::new(62, 1.0, 0.0), NoteEvent::new(64, 1.0, 0.5)]);
        let mse = style_mse(&[b], std::slice::from_ref(&a)).unwrap();
        assert_eq!(mse, [0.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(style_mse(std::slice::from_ref(&a), std::slice::from_ref(&a)).unwrap(), [0.0; 9]);
    }

    #[test]
    fn song_length_and_rests() {
        let m = MelodySequence::new(vec![NoteEvent::new(60, 1.0, 0.5), NoteEvent::new(67, 2.0, 0.0)]);
        let r = compute_metrics(&[m], RepetitionStrategy::default()).unwrap();
        assert_eq!(r.song_length, 3.5);
        assert_eq!(r.avg_rest, 0.25);
        assert_eq!(r.restless_notes, 1.0);
        assert_eq!(r.midi_span, 7.0);
        assert!(compute_metrics(&[], RepetitionStrategy::default()).is_err());
    }
}
