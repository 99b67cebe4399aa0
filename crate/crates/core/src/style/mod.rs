//! Sequence-level style statistics and their one-hot reference style embeddings.

mod rse;

pub use rse::{
    build_rse, control_to_rse, fit_discretizers, DiscretizerSet, FeatureDiscretizer, RseVector, StyleControls,
    DISCRETIZER_MANIFEST_VERSION,
};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::attr::{Attribute, PerAttr};
use crate::error::{Error, Result};
use crate::melody::MelodySequence;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Range,
    Average,
    Variance,
}

impl Feature {
    pub const ALL: [Feature; 3] = [Feature::Range, Feature::Average, Feature::Variance];

    pub fn index(self) -> usize {
        match self {
            Feature::Range => 0,
            Feature::Average => 1,
            Feature::Variance => 2,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Feature::Range => "rng",
            Feature::Average => "avg",
            Feature::Variance => "var",
        }
    }

    fn letter(self) -> char {
        match self {
            Feature::Range => 'R',
            Feature::Average => 'A',
            Feature::Variance => 'V',
        }
    }
}

/// One of the nine (attribute, statistic) pairs, written `pitch.avg`, `rest.var`, ….
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StyleKey {
    pub attribute: Attribute,
    pub feature: Feature,
}

impl StyleKey {
    pub fn new(attribute: Attribute, feature: Feature) -> Self {
        StyleKey { attribute, feature }
    }

    /// All nine keys in radar order: PR, PA, PV, DR, DA, DV, RR, RA, RV.
    pub fn all() -> [StyleKey; 9] {
        let mut out = [StyleKey::new(Attribute::Pitch, Feature::Range); 9];
        for (i, a) in Attribute::ALL.into_iter().enumerate() {
            for (j, f) in Feature::ALL.into_iter().enumerate() {
                out[i * 3 + j] = StyleKey::new(a, f);
            }
        }
        out
    }

    /// Two-letter code, e.g. `PA` for pitch average.
    pub fn code(self) -> String {
        format!("{}{}", self.attribute.letter(), self.feature.letter())
    }

    pub fn parse(s: &str) -> Option<Self> {
        let (a, f) = s.split_once('.')?;
        let feature = match f {
            "rng" | "range" => Feature::Range,
            "avg" | "average" | "mean" => Feature::Average,
            "var" | "variance" => Feature::Variance,
            _ => return None,
        };
        Some(StyleKey::new(Attribute::parse(a)?, feature))
    }
}

impl fmt::Display for StyleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.attribute, self.feature.short())
    }
}

/// Range, mean and sample variance of one attribute sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureTriple {
    pub range: f64,
    pub average: f64,
    pub variance: f64,
}

impl FeatureTriple {
    pub fn get(&self, f: Feature) -> f64 {
        match f {
            Feature::Range => self.range,
            Feature::Average => self.average,
            Feature::Variance => self.variance,
        }
    }

    /// Statistics of `values`; variance uses the `T − 1` divisor.
    pub fn of(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::SequenceTooShort(n));
        }
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let average = values.iter().sum::<f64>() / n as f64;
        let variance = values.iter().map(|v| (v - average).powi(2)).sum::<f64>() / (n - 1) as f64;
        Ok(FeatureTriple {
            range: max - min,
            average,
            variance,
        })
    }
}

/// The nine style statistics of a melody.
pub type StyleFeatures = PerAttr<FeatureTriple>;

impl PerAttr<FeatureTriple> {
    pub fn value(&self, key: StyleKey) -> f64 {
        self[key.attribute].get(key.feature)
    }

    /// The nine values in radar order.
    pub fn to_array(&self) -> [f64; 9] {
        StyleKey::all().map(|k| self.value(k))
    }
}

/// Style statistics of a melody in attribute units.
///
/// ```
/// use conl2m::attr::Attribute;
/// use conl2m::melody::{MelodySequence, NoteEvent};
/// use conl2m::style::extract_style_features;
///
/// let m = MelodySequence::new(vec![
///     NoteEvent::new(60, 1.0, 0.0),
///     NoteEvent::new(64, 0.5, 0.0),
///     NoteEvent::new(67, 1.0, 0.0),
/// ]);
/// let f = extract_style_features(&m).unwrap();
/// assert_eq!(f[Attribute::Pitch].range, 7.0);
/// assert!((f[Attribute::Pitch].variance - 12.333333).abs() < 1e-6);
/// ```
pub fn extract_style_features(melody: &MelodySequence) -> Result<StyleFeatures> {
    PerAttr::from_fn(|a| a).try_map(|a, _| FeatureTriple::of(&melody.values(a)))
}

/// Mean and sample variance of one attribute's 1-based class labels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub mean: f64,
    pub variance: f64,
}

/// Ground-truth statistics in class-label space (labels `1..=K`), from zero-based rows.
pub fn index_stats(rows: &[usize]) -> Result<IndexStats> {
    let labels: Vec<f64> = rows.iter().map(|&r| (r + 1) as f64).collect();
    let t = FeatureTriple::of(&labels)?;
    Ok(IndexStats {
        mean: t.average,
        variance: t.variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::melody::NoteEvent;

    fn melody(notes: &[(u8, f64, f64)]) -> MelodySequence {
        MelodySequence::new(notes.iter().map(|&(p, d, r)| NoteEvent::new(p, d, r)).collect())
    }

    #[test]
    fn hand_computed_pitch_statistics() {
        let f = extract_style_features(&melody(&[(60, 1.0, 0.0), (64, 0.5, 0.0), (67, 1.0, 0.0)])).unwrap();
        let mean = (60.0 + 64.0 + 67.0) / 3.0;
        let var = ((60.0f64 - mean).powi(2) + (64.0f64 - mean).powi(2) + (67.0f64 - mean).powi(2)) / 2.0;
        assert_eq!(f[Attribute::Pitch].range, 7.0);
        assert!((f[Attribute::Pitch].average - 63.667).abs() < 1e-3);
        assert!((f[Attribute::Pitch].variance - 12.333).abs() < 1e-3);
        assert!((f[Attribute::Pitch].variance - var).abs() < 1e-12);
        // durations (1.0, 0.5, 1.0)
        assert!((f[Attribute::Duration].average - 0.8333).abs() < 1e-4);
        assert!((f[Attribute::Duration].variance - 0.0833).abs() < 1e-4);
    }

    #[test]
    fn constant_melody_has_zero_spread() {
        let f = extract_style_features(&melody(&[(60, 1.0, 0.0); 5])).unwrap();
        assert_eq!(f.to_array(), [0.0, 60.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_note_is_too_short() {
        assert!(matches!(
            extract_style_features(&melody(&[(60, 1.0, 0.0)])),
            Err(Error::SequenceTooShort(1))
        ));
    }

    #[test]
    fn keys_parse_and_print() {
        let codes: Vec<String> = StyleKey::all().iter().map(|k| k.code()).collect();
        assert_eq!(codes, ["PR", "PA", "PV", "DR", "DA", "DV", "RR", "RA", "RV"]);
        let k = StyleKey::parse("pitch.avg").unwrap();
        assert_eq!(k.to_string(), "pitch.avg");
        assert_eq!(StyleKey::parse("rest.variance").unwrap().code(), "RV");
        assert!(StyleKey::parse("tempo.avg").is_none());
    }

    #[test]
    fn index_stats_use_one_based_labels() {
        let s = index_stats(&[0, 2]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.variance, 2.0);
    }
}
