use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MelodySequence;
use crate::attr::{Attribute, PerAttr};
use crate::error::{Error, Result};

pub const VOCAB_MANIFEST_VERSION: u32 = 1;

const VALUE_TOLERANCE: f64 = 1e-6;

/// Ordered value set of one attribute. Row `i` of a one-hot is class label `i + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeVocab {
    pub attribute: Attribute,
    pub values: Vec<f64>,
}

impl AttributeVocab {
    /// Sorted, de-duplicated value set.
    pub fn from_values(attribute: Attribute, values: impl IntoIterator<Item = f64>) -> Self {
        let mut values: Vec<f64> = values.into_iter().collect();
        values.sort_by(f64::total_cmp);
        values.dedup_by(|a, b| (*a - *b).abs() < VALUE_TOLERANCE);
        AttributeVocab { attribute, values }
    }

    /// Contiguous MIDI range `lo..=hi`.
    pub fn pitch_range(lo: u8, hi: u8) -> Self {
        AttributeVocab {
            attribute: Attribute::Pitch,
            values: (lo..=hi).map(f64::from).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Zero-based row of `value`, if it is a member.
    pub fn index_of(&self, value: f64) -> Option<usize> {
        let pos = self.values.partition_point(|&v| v < value - VALUE_TOLERANCE);
        (pos < self.values.len() && (self.values[pos] - value).abs() < VALUE_TOLERANCE).then_some(pos)
    }

    /// Class label in `1..=K`.
    pub fn label_of(&self, value: f64) -> Option<usize> {
        self.index_of(value).map(|i| i + 1)
    }

    pub fn value_of(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// Row of the member closest to `value`.
    pub fn nearest_index(&self, value: f64) -> usize {
        let pos = self.values.partition_point(|&v| v < value);
        match pos {
            0 => 0,
            p if p == self.values.len() => p - 1,
            p => {
                if (value - self.values[p - 1]) <= (self.values[p] - value) {
                    p - 1
                } else {
                    p
                }
            }
        }
    }

    pub fn encode(&self, values: &[f64]) -> Result<Vec<usize>> {
        values
            .iter()
            .map(|&v| {
                self.index_of(v).ok_or(Error::VocabOverflow {
                    attribute: self.attribute,
                    value: v,
                })
            })
            .collect()
    }
}

/// The three vocabularies, persisted with models as a versioned JSON manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabManifest {
    pub version: u32,
    pub pitch: AttributeVocab,
    pub duration: AttributeVocab,
    pub rest: AttributeVocab,
}

impl VocabManifest {
    pub fn new(pitch: AttributeVocab, duration: AttributeVocab, rest: AttributeVocab) -> Self {
        VocabManifest {
            version: VOCAB_MANIFEST_VERSION,
            pitch,
            duration,
            rest,
        }
    }

    /// Builds vocabularies covering every value in `melodies`.
    ///
    /// Pitch is a contiguous MIDI range; when `pitch_classes` asks for more
    /// classes than the observed span, the range is widened around it.
    /// Duration and rest are the sorted distinct observed values.
    pub fn from_melodies<'a>(
        melodies: impl IntoIterator<Item = &'a MelodySequence>,
        pitch_classes: Option<usize>,
    ) -> Result<Self> {
        let mut lo = u8::MAX;
        let mut hi = u8::MIN;
        let mut durations = Vec::new();
        let mut rests = Vec::new();
        for m in melodies {
            for n in &m.notes {
                lo = lo.min(n.pitch);
                hi = hi.max(n.pitch);
                durations.push(n.duration);
                rests.push(n.rest);
            }
        }
        if lo > hi {
            return Err(Error::EmptyCorpus);
        }
        let span = usize::from(hi - lo) + 1;
        if let Some(k) = pitch_classes {
            if k > span {
                let extra = k - span;
                let below = (extra / 2).min(usize::from(lo));
                let new_lo = usize::from(lo) - below;
                let new_hi = (new_lo + k - 1).min(127);
                let new_lo = new_hi + 1 - k.min(new_hi + 1);
                lo = new_lo as u8;
                hi = new_hi as u8;
            } else if k < span {
                log::warn!("observed pitch span {span} exceeds requested {k} classes; keeping {span}");
            }
        }
        Ok(VocabManifest::new(
            AttributeVocab::pitch_range(lo, hi),
            AttributeVocab::from_values(Attribute::Duration, durations),
            AttributeVocab::from_values(Attribute::Rest, rests),
        ))
    }

    pub fn get(&self, attr: Attribute) -> &AttributeVocab {
        match attr {
            Attribute::Pitch => &self.pitch,
            Attribute::Duration => &self.duration,
            Attribute::Rest => &self.rest,
        }
    }

    pub fn sizes(&self) -> PerAttr<usize> {
        PerAttr::from_fn(|a| self.get(a).len())
    }

    /// Zero-based class rows of every note, per attribute.
    pub fn encode(&self, melody: &MelodySequence) -> Result<PerAttr<Vec<usize>>> {
        PerAttr::from_fn(|a| a).try_map(|a, _| self.get(a).encode(&melody.values(a)))
    }

    /// Snaps every value to its nearest vocabulary member.
    pub fn quantize(&self, melody: &MelodySequence) -> MelodySequence {
        let tokens = PerAttr::from_fn(|a| {
            melody
                .values(a)
                .into_iter()
                .map(|v| self.get(a).nearest_index(v))
                .collect::<Vec<_>>()
        });
        MelodySequence::from_indices(self, &tokens)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: VocabManifest = serde_json::from_str(&text)?;
        if manifest.version != VOCAB_MANIFEST_VERSION {
            return Err(Error::UnsupportedVersion(manifest.version));
        }
        Ok(manifest)
    }
}
