//! Piano-roll geometry: one rectangle per note on a quarter-note time axis.

use serde::{Deserialize, Serialize};

use super::{MelodySequence, DEFAULT_TEMPO_BPM};
use crate::error::{Error, Result};
use crate::lyrics::LyricsSequence;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PianoRollNote {
    /// Start, in quarter notes from the beginning.
    pub onset: f64,
    /// End of the sounding note; the rest follows as a gap.
    pub offset: f64,
    pub pitch: u8,
    pub syllable: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PianoRoll {
    pub tempo_bpm: f64,
    /// Total duration plus rest, in quarter notes.
    pub total_length: f64,
    pub notes: Vec<PianoRollNote>,
}

impl PianoRoll {
    /// Lays out `melody` with one syllable label per note.
    ///
    /// ```
    /// use conl2m::lyrics::LyricsSequence;
    /// use conl2m::melody::{MelodySequence, NoteEvent, PianoRoll};
    ///
    /// let m = MelodySequence::new(vec![NoteEvent::new(60, 1.0, 0.5), NoteEvent::new(62, 2.0, 0.0)]);
    /// let l = LyricsSequence::new(vec!["hel".into(), "lo".into()], vec![[0, 2]]).unwrap();
    /// let roll = PianoRoll::new(&m, &l, None).unwrap();
    /// assert_eq!(roll.notes[1].onset, 1.5);
    /// assert_eq!(roll.total_length, 3.5);
    /// ```
    pub fn new(melody: &MelodySequence, lyrics: &LyricsSequence, tempo_bpm: Option<f64>) -> Result<Self> {
        if melody.len() != lyrics.len() {
            return Err(Error::DimensionMismatch {
                what: "syllables vs notes".into(),
                expected: melody.len(),
                found: lyrics.len(),
            });
        }
        let mut onset = 0.0;
        let notes = melody
            .notes
            .iter()
            .zip(&lyrics.syllables)
            .map(|(n, s)| {
                let note = PianoRollNote {
                    onset,
                    offset: onset + n.duration,
                    pitch: n.pitch,
                    syllable: s.clone(),
                };
                onset += n.duration + n.rest;
                note
            })
            .collect();
        Ok(PianoRoll {
            tempo_bpm: tempo_bpm.unwrap_or(DEFAULT_TEMPO_BPM),
            total_length: onset,
            notes,
        })
    }

    /// Playback length in seconds at the roll's tempo.
    pub fn seconds(&self) -> f64 {
        self.total_length * 60.0 / self.tempo_bpm
    }
}
