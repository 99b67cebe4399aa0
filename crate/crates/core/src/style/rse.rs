//! Uniform k-bin discretizers fitted on the training split, and the one-hot
//! reference style embedding built from them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Feature, StyleFeatures, StyleKey};
use crate::attr::{Attribute, PerAttr};
use crate::error::{Error, Result};
use crate::melody::PairedSample;

pub const DISCRETIZER_MANIFEST_VERSION: u32 = 1;

/// Uniform bins over `[min, max]`. Bins are left-closed; the last bin also
/// holds `max`. Values outside the fitted range clamp to the edge bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureDiscretizer {
    pub key: StyleKey,
    pub bins: usize,
    pub min: f64,
    pub max: f64,
    pub edges: Vec<f64>,
}

impl FeatureDiscretizer {
    pub fn new(key: StyleKey, bins: usize, min: f64, max: f64) -> Self {
        let bins = if max > min { bins.max(1) } else { 1 };
        let edges = (0..=bins)
            .map(|i| if i == bins { max } else { min + (max - min) * i as f64 / bins as f64 })
            .collect();
        FeatureDiscretizer {
            key,
            bins,
            min,
            max,
            edges,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.max <= self.min
    }

    /// Bin of a raw feature value.
    pub fn bin(&self, x: f64) -> usize {
        let k = self.bins;
        if k == 1 || x.is_nan() || x <= self.min {
            return 0;
        }
        if x >= self.max {
            return k - 1;
        }
        let span = self.max - self.min;
        // values within a hair of an edge belong to the bin that edge opens
        let tol = 1e-9 * span;
        let mut i = (((x - self.min) / span) * k as f64).floor().clamp(0.0, (k - 1) as f64) as usize;
        while i + 1 < k && x >= self.edges[i + 1] - tol {
            i += 1;
        }
        while i > 0 && x < self.edges[i] - tol {
            i -= 1;
        }
        i
    }

    /// Maps a value in `[0, 1]` linearly onto the fitted range.
    pub fn denormalize(&self, v: f64) -> f64 {
        self.min + v * (self.max - self.min)
    }

    pub fn normalize(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            (x - self.min) / (self.max - self.min)
        }
    }
}

/// The nine fitted discretizers, persisted next to model checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizerSet {
    pub version: u32,
    pub discretizers: PerAttr<[FeatureDiscretizer; 3]>,
}

impl DiscretizerSet {
    pub fn get(&self, key: StyleKey) -> &FeatureDiscretizer {
        &self.discretizers[key.attribute][key.feature.index()]
    }

    /// RSE length of each attribute: `k_rng + k_avg + k_var`.
    pub fn dims(&self) -> PerAttr<usize> {
        self.discretizers.map(|_, d| d.iter().map(|x| x.bins).sum())
    }

    pub fn bin_counts(&self) -> PerAttr<[usize; 3]> {
        self.discretizers.map(|_, d| [d[0].bins, d[1].bins, d[2].bins])
    }

    /// Min-max normalization of raw features against the fitted ranges.
    pub fn normalize(&self, features: &StyleFeatures) -> StyleControls {
        StyleControls(PerAttr::from_fn(|a| {
            Feature::ALL.map(|f| {
                let k = StyleKey::new(a, f);
                self.get(k).normalize(features.value(k))
            })
        }))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: DiscretizerSet = serde_json::from_str(&text)?;
        if set.version != DISCRETIZER_MANIFEST_VERSION {
            return Err(Error::UnsupportedVersion(set.version));
        }
        Ok(set)
    }
}

fn bin_count(key: StyleKey, min: f64, max: f64) -> usize {
    let span_bins = ((max - min).round() as usize).max(1);
    match (key.feature, key.attribute) {
        (Feature::Range, _) => span_bins,
        (Feature::Average, Attribute::Pitch) => span_bins,
        (Feature::Average, _) => 10,
        (Feature::Variance, Attribute::Pitch) => 30,
        (Feature::Variance, _) => 20,
    }
}

/// Fits the nine discretizers on training samples.
///
/// Range bins span the observed ranges one unit per bin; pitch average uses
/// one bin per rounded semitone of the observed span; duration and rest
/// averages use 10 bins; variances use 30, 20 and 20.
pub fn fit_discretizers(train: &[PairedSample]) -> Result<DiscretizerSet> {
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let discretizers = PerAttr::from_fn(|a| {
        Feature::ALL.map(|f| {
            let key = StyleKey::new(a, f);
            let (min, max) = train.iter().map(|s| s.style.value(key)).fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), x| (lo.min(x), hi.max(x)),
            );
            if max <= min {
                log::warn!("{key}: degenerate training range {min}; using a single bin");
            }
            FeatureDiscretizer::new(key, bin_count(key, min, max), min, max)
        })
    });
    Ok(DiscretizerSet {
        version: DISCRETIZER_MANIFEST_VERSION,
        discretizers,
    })
}

/// Per-attribute one-hot bins for range, average and variance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RseVector {
    pub bins: PerAttr<[usize; 3]>,
    pub dims: PerAttr<[usize; 3]>,
}

impl RseVector {
    pub fn len(&self, attr: Attribute) -> usize {
        self.dims[attr].iter().sum()
    }

    /// `[onehot(range), onehot(average), onehot(variance)]` for one attribute.
    pub fn dense(&self, attr: Attribute) -> Vec<f64> {
        let mut out = vec![0.0; self.len(attr)];
        let mut offset = 0;
        for (bin, dim) in self.bins[attr].iter().zip(self.dims[attr]) {
            out[offset + bin] = 1.0;
            offset += dim;
        }
        out
    }

    /// All three attribute embeddings, pitch then duration then rest.
    pub fn dense_all(&self) -> Vec<f64> {
        Attribute::ALL.iter().flat_map(|&a| self.dense(a)).collect()
    }
}

/// Bins the raw features of a melody with the training discretizers.
pub fn build_rse(features: &StyleFeatures, set: &DiscretizerSet) -> RseVector {
    RseVector {
        bins: PerAttr::from_fn(|a| Feature::ALL.map(|f| set.get(StyleKey::new(a, f)).bin(features.value(StyleKey::new(a, f))))),
        dims: set.bin_counts(),
    }
}

/// Nine normalized style controls in `[0, 1]`, `[rng, avg, var]` per attribute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleControls(pub PerAttr<[f64; 3]>);

impl StyleControls {
    pub fn uniform(v: f64) -> Self {
        StyleControls(PerAttr::from_fn(|_| [v; 3]))
    }

    pub fn get(&self, key: StyleKey) -> f64 {
        self.0[key.attribute][key.feature.index()]
    }

    pub fn set(&mut self, key: StyleKey, v: f64) {
        self.0[key.attribute][key.feature.index()] = v;
    }

    pub fn with(mut self, key: StyleKey, v: f64) -> Self {
        self.set(key, v);
        self
    }

    /// Every control must be finite and inside `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        for key in StyleKey::all() {
            let v = self.get(key);
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidControl {
                    feature: key.to_string(),
                    value: v,
                });
            }
        }
        Ok(())
    }
}

/// Maps normalized controls back to feature values on the training range,
/// then bins them with the training discretizers.
pub fn control_to_rse(controls: &StyleControls, set: &DiscretizerSet) -> Result<RseVector> {
    controls.validate()?;
    Ok(RseVector {
        bins: PerAttr::from_fn(|a| {
            Feature::ALL.map(|f| {
                let d = set.get(StyleKey::new(a, f));
                d.bin(d.denormalize(controls.get(StyleKey::new(a, f))))
            })
        }),
        dims: set.bin_counts(),
    })
}
