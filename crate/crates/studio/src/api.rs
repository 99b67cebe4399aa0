//! Request and response bodies of the generation service, shared with the CLI.
//!
//! Controls are keyed by style feature name (`pitch.avg`, `rest.var`, ...);
//! omitted controls default to [`DEFAULT_CONTROL`].

use std::collections::BTreeMap;

use conl2m::attr::Attribute;
use conl2m::lyrics::{tokenize_lyrics, LyricsSequence};
use conl2m::melody::MelodySequence;
use conl2m::model::Model;
use conl2m::style::{StyleControls, StyleFeatures, StyleKey};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_CONTROL: f64 = 0.5;

/// Longest accepted lyric, in syllables.
pub const MAX_SYLLABLES: usize = 1024;

/// Random seeds stay below 2^53 so they survive a round trip through a
/// JavaScript number.
pub const SEED_LIMIT: u64 = 1 << 53;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    /// Raw text; words split on whitespace, syllables on `-`.
    pub lyrics: String,
    #[serde(default)]
    pub controls: BTreeMap<String, f64>,
    /// Drawn at random and reported back when absent.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Checkpoint id; the service default when absent.
    #[serde(default)]
    pub checkpoint: Option<String>,
}

/// The request as it was executed: all nine controls, the seed actually used
/// and the resolved checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RequestEcho {
    pub lyrics: String,
    pub controls: BTreeMap<String, f64>,
    pub seed: u64,
    pub checkpoint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub generation_id: String,
    pub request: RequestEcho,
    pub syllables: Vec<String>,
    pub melody: MelodySequence,
    /// Decoded class indices per attribute.
    pub tokens: BTreeMap<String, Vec<usize>>,
    /// Realized style features of the melody, keyed like the controls;
    /// absent for single-note melodies.
    pub features: Option<BTreeMap<String, f64>>,
}

/// A rejected input and the request field it came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        FieldError {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for FieldError {}

/// Resolves named controls onto all nine features. Aliases such as
/// `pitch.average` are accepted; naming one feature twice is an error.
pub fn parse_controls(named: &BTreeMap<String, f64>) -> Result<StyleControls, FieldError> {
    let mut controls = StyleControls::uniform(DEFAULT_CONTROL);
    let mut seen: BTreeMap<StyleKey, &str> = BTreeMap::new();
    for (name, &value) in named {
        let field = format!("controls.{name}");
        let key = StyleKey::parse(name).ok_or_else(|| {
            FieldError::new(&field, "unknown style feature; expected <pitch|duration|rest>.<rng|avg|var>")
        })?;
        if let Some(first) = seen.insert(key, name) {
            return Err(FieldError::new(&field, format!("duplicates controls.{first}")));
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(FieldError::new(&field, format!("{value} is outside [0, 1]")));
        }
        controls.set(key, value);
    }
    Ok(controls)
}

/// Parses a `feature=value` command-line assignment.
pub fn parse_assignment(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected feature=value, got {s:?}"))?;
    let value: f64 = value.trim().parse().map_err(|e| format!("{name}: {e}"))?;
    Ok((name.trim().to_string(), value))
}

pub fn controls_map(controls: &StyleControls) -> BTreeMap<String, f64> {
    StyleKey::all().into_iter().map(|k| (k.to_string(), controls.get(k))).collect()
}

pub fn features_map(features: &StyleFeatures) -> BTreeMap<String, f64> {
    StyleKey::all().into_iter().map(|k| (k.to_string(), features.value(k))).collect()
}

pub fn random_seed() -> u64 {
    rand::random::<u64>() % SEED_LIMIT
}

pub fn tokenize(lyrics: &str, model: &Model) -> Result<LyricsSequence, FieldError> {
    let seq = tokenize_lyrics(lyrics, &model.assets.normalization)
        .map_err(|_| FieldError::new("lyrics", "no syllables found"))?;
    if seq.len() > MAX_SYLLABLES {
        return Err(FieldError::new(
            "lyrics",
            format!("{} syllables exceeds the limit of {MAX_SYLLABLES}", seq.len()),
        ));
    }
    Ok(seq)
}

/// Identifies a generation by everything that determines its output.
pub fn generation_id(echo: &RequestEcho, checkpoint_hash: &str) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(echo).expect("echo serializes"));
    h.update(checkpoint_hash.as_bytes());
    hex::encode(&h.finalize()[..8])
}

/// Why a generation could not be produced.
#[derive(Debug)]
pub enum GenerateError {
    Invalid(FieldError),
    Model(conl2m::Error),
}

impl std::fmt::Display for GenerateError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GenerateError::Invalid(e) => e.fmt(f),
            GenerateError::Model(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for GenerateError {}

/// Validates `req` and generates with `model`. `checkpoint` and
/// `checkpoint_hash` name the loaded model; `seed` replaces a missing request seed.
pub fn generate(
    model: &Model,
    checkpoint: &str,
    checkpoint_hash: &str,
    req: &GenerateRequest,
    fallback_seed: u64,
) -> Result<(GenerateResponse, LyricsSequence), GenerateError> {
    let controls = parse_controls(&req.controls).map_err(GenerateError::Invalid)?;
    let seq = tokenize(&req.lyrics, model).map_err(GenerateError::Invalid)?;
    let seed = req.seed.unwrap_or(fallback_seed);
    let (_, g) = model.generate(&req.lyrics, &controls, seed).map_err(GenerateError::Model)?;
    let echo = RequestEcho {
        lyrics: req.lyrics.clone(),
        controls: controls_map(&controls),
        seed,
        checkpoint: checkpoint.to_string(),
    };
    let response = GenerateResponse {
        generation_id: generation_id(&echo, checkpoint_hash),
        request: echo,
        syllables: seq.syllables.clone(),
        melody: g.melody,
        tokens: Attribute::ALL
            .into_iter()
            .map(|a| (a.name().to_string(), g.tokens[a].clone()))
            .collect(),
        features: g.features.as_ref().map(features_map),
    };
    Ok((response, seq))
}
