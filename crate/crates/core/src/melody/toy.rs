//! Synthetic paired corpus so the whole pipeline runs without the published data.
//!
//! Each style regime draws a per-melody pitch center around its own center,
//! walks the pitch in small steps around it, and picks durations and rests
//! from a palette whose breadth grows with `rhythm_complexity`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{MelodySequence, NoteEvent, PairedSample};
use crate::error::Result;
use crate::lyrics::LyricsSequence;
use crate::rng::stream_rng;

/// The ten duration values the toy corpus can emit, in quarter notes.
pub const TOY_DURATIONS: [f64; 10] = [0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0];
/// The five rest values the toy corpus can emit, in quarter notes.
pub const TOY_RESTS: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 4.0];

const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyStyle {
    /// Mean MIDI pitch of the regime.
    pub pitch_center: f64,
    /// Per-melody centers are drawn uniformly from `pitch_center ± center_spread`.
    pub center_spread: f64,
    /// Largest pitch step between neighbouring notes.
    pub max_step: i32,
    /// 0 = steady quarter notes and no rests; 1 = the full duration and rest palette.
    pub rhythm_complexity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyCorpusConfig {
    pub samples: usize,
    pub length: usize,
    pub styles: Vec<ToyStyle>,
    pub lexicon_size: usize,
    pub seed: u64,
}

impl ToyCorpusConfig {
    /// Two regimes: low and steady vs. high and rhythmically busy.
    pub fn two_regimes(samples: usize, seed: u64) -> Self {
        ToyCorpusConfig {
            samples,
            length: 20,
            styles: vec![
                ToyStyle {
                    pitch_center: 58.0,
                    center_spread: 10.0,
                    max_step: 1,
                    rhythm_complexity: 0.05,
                },
                ToyStyle {
                    pitch_center: 66.0,
                    center_spread: 10.0,
                    max_step: 1,
                    rhythm_complexity: 0.45,
                },
            ],
            lexicon_size: 60,
            seed,
        }
    }
}

fn lexicon(size: usize) -> Vec<Vec<String>> {
    let syllable = |i: usize| format!("{}{}", ONSETS[i % ONSETS.len()], VOWELS[(i / ONSETS.len()) % VOWELS.len()]);
    (0..size)
        .map(|w| {
            let n_syl = 1 + w % 3;
            (0..n_syl).map(|s| syllable(w * 7 + s * 13)).collect()
        })
        .collect()
}

pub fn toy_lyrics(length: usize, lexicon_size: usize, rng: &mut impl Rng) -> LyricsSequence {
    let lex = lexicon(lexicon_size.max(1));
    let mut syllables = Vec::with_capacity(length);
    let mut spans = Vec::new();
    while syllables.len() < length {
        let word = &lex[rng.random_range(0..lex.len())];
        let start = syllables.len();
        for s in word.iter().take(length - start) {
            syllables.push(s.clone());
        }
        spans.push([start, syllables.len()]);
    }
    LyricsSequence::new(syllables, spans).expect("spans are contiguous by construction")
}

fn toy_melody(style: &ToyStyle, lyrics: &LyricsSequence, rng: &mut impl Rng) -> MelodySequence {
    let center = style.pitch_center + rng.random_range(-style.center_spread..=style.center_spread);
    let mut pitch = center.round() as i32;
    let word_end: Vec<bool> = {
        let mut ends = vec![false; lyrics.len()];
        for span in &lyrics.word_spans {
            ends[span[1] - 1] = true;
        }
        ends
    };
    let busy = style.rhythm_complexity.clamp(0.0, 1.0);
    let notes = (0..lyrics.len())
        .map(|t| {
            if t > 0 {
                let step = rng.random_range(-style.max_step..=style.max_step);
                let pull = if (pitch as f64) > center + 3.0 {
                    -1
                } else if (pitch as f64) < center - 3.0 {
                    1
                } else {
                    0
                };
                pitch += step + pull;
            }
            let duration = if rng.random::<f64>() < busy {
                TOY_DURATIONS[rng.random_range(0..TOY_DURATIONS.len())]
            } else if rng.random::<f64>() < 0.8 {
                1.0
            } else {
                0.5
            };
            let rest = if word_end[t] && rng.random::<f64>() < 0.3 + 0.5 * busy {
                if rng.random::<f64>() < busy {
                    TOY_RESTS[rng.random_range(1..TOY_RESTS.len())]
                } else {
                    1.0
                }
            } else {
                0.0
            };
            NoteEvent::new(pitch.clamp(0, 127) as u8, duration, rest)
        })
        .collect();
    MelodySequence::new(notes)
}

/// Generates `cfg.samples` paired samples, cycling through the style regimes.
pub fn toy_corpus(cfg: &ToyCorpusConfig) -> Result<Vec<PairedSample>> {
    let mut rng = stream_rng(cfg.seed, "toy-corpus", 0);
    (0..cfg.samples)
        .map(|i| {
            let style = &cfg.styles[i % cfg.styles.len()];
            let lyrics = toy_lyrics(cfg.length, cfg.lexicon_size, &mut rng);
            let melody = toy_melody(style, &lyrics, &mut rng);
            PairedSample::new(format!("toy-{i:05}"), lyrics, melody)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attr::Attribute;
    use crate::melody::{attribute_histograms, filter_dataset};

    #[test]
    fn toy_corpus_is_deterministic_and_singable() {
        let cfg = ToyCorpusConfig::two_regimes(200, 3);
        let a = toy_corpus(&cfg).unwrap();
        assert_eq!(a, toy_corpus(&cfg).unwrap());
        assert!(a.iter().all(|s| s.melody.len() == 20 && s.lyrics.len() == 20));
        assert_eq!(filter_dataset(&a).len(), a.len());
    }

    #[test]
    fn histogram_shape_matches_vocal_material() {
        let corpus = toy_corpus(&ToyCorpusConfig::two_regimes(400, 9)).unwrap();
        let h = attribute_histograms(&corpus);
        let mode = |a: Attribute| h[a].iter().max_by_key(|(_, c)| *c).unwrap().0;
        let pitch_mode = mode(Attribute::Pitch);
        assert!((45.0..=80.0).contains(&pitch_mode), "modal pitch {pitch_mode}");
        let total: usize = h[Attribute::Duration].iter().map(|(_, c)| c).sum();
        let short: usize = h[Attribute::Duration].iter().filter(|(v, _)| *v <= 1.0).map(|(_, c)| c).sum();
        assert!(short * 2 > total);
        assert_eq!(mode(Attribute::Rest), 0.0);
    }
}
