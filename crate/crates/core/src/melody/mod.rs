//! Notes, melodies, vocabularies, corpora and MIDI.

mod dataset;
mod midi;
mod pianoroll;
pub mod toy;
mod vocab;

pub use dataset::{
    attribute_histograms, filter_dataset, ingest_corpus, passes_filter, read_corpus_str, split_dataset,
    write_corpus, CorpusFormat, DatasetSplit, FilterBounds, IngestLog, PairedSample, SkippedRecord,
};
pub use midi::{export_midi, import_midi, midi_bytes, parse_midi, MidiOptions, DEFAULT_TEMPO_BPM, TICKS_PER_QUARTER};
pub use pianoroll::{PianoRoll, PianoRollNote};
pub use vocab::{AttributeVocab, VocabManifest, VOCAB_MANIFEST_VERSION};

use serde::{Deserialize, Serialize};

use crate::attr::{Attribute, PerAttr};

/// One note: MIDI pitch, duration and following rest in quarter notes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub pitch: u8,
    pub duration: f64,
    pub rest: f64,
}

impl NoteEvent {
    pub fn new(pitch: u8, duration: f64, rest: f64) -> Self {
        NoteEvent { pitch, duration, rest }
    }

    pub fn value(&self, attr: Attribute) -> f64 {
        match attr {
            Attribute::Pitch => f64::from(self.pitch),
            Attribute::Duration => self.duration,
            Attribute::Rest => self.rest,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MelodySequence {
    pub notes: Vec<NoteEvent>,
}

impl MelodySequence {
    pub fn new(notes: Vec<NoteEvent>) -> Self {
        MelodySequence { notes }
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    /// The sequence of one attribute in its natural units.
    pub fn values(&self, attr: Attribute) -> Vec<f64> {
        self.notes.iter().map(|n| n.value(attr)).collect()
    }

    pub fn pitches(&self) -> Vec<u8> {
        self.notes.iter().map(|n| n.pitch).collect()
    }

    /// Total duration plus rest, in quarter notes.
    pub fn song_length(&self) -> f64 {
        self.notes.iter().map(|n| n.duration + n.rest).sum()
    }

    /// Rebuilds a melody from per-attribute class indices.
    pub fn from_indices(vocab: &VocabManifest, tokens: &PerAttr<Vec<usize>>) -> Self {
        let len = tokens[Attribute::Pitch].len();
        let notes = (0..len)
            .map(|t| {
                NoteEvent::new(
                    vocab.pitch.value_of(tokens[Attribute::Pitch][t]) as u8,
                    vocab.duration.value_of(tokens[Attribute::Duration][t]),
                    vocab.rest.value_of(tokens[Attribute::Rest][t]),
                )
            })
            .collect();
        MelodySequence { notes }
    }
}
