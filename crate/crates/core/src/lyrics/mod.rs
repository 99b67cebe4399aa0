//! Syllable-aligned lyrics, skip-gram token embeddings and the per-syllable
//! word∥syllable lyric vectors.

mod skipgram;
mod table;

pub use skipgram::{train_skipgram, SkipGramConfig};
pub use table::{embed_lyrics, load_embedding_table, EmbeddingTable, LyricEmbedding};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Syllable tokens grouped into words. `word_spans[i] = [start, end)` are
/// contiguous, ordered and cover every syllable exactly once.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LyricsSequence {
    pub syllables: Vec<String>,
    pub word_spans: Vec<[usize; 2]>,
}

impl LyricsSequence {
    pub fn new(syllables: Vec<String>, word_spans: Vec<[usize; 2]>) -> Result<Self> {
        let mut expected = 0;
        for (i, &[start, end]) in word_spans.iter().enumerate() {
            if start != expected || end <= start {
                return Err(Error::InvalidConfig(format!(
                    "word span {i} = [{start}, {end}) does not continue at syllable {expected}"
                )));
            }
            expected = end;
        }
        if expected != syllables.len() {
            return Err(Error::InvalidConfig(format!(
                "word spans cover {expected} of {} syllables",
                syllables.len()
            )));
        }
        Ok(LyricsSequence { syllables, word_spans })
    }

    pub fn len(&self) -> usize {
        self.syllables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.syllables.is_empty()
    }

    /// The word token (its syllables joined) of every word.
    pub fn words(&self) -> Vec<String> {
        self.word_spans
            .iter()
            .map(|&[s, e]| self.syllables[s..e].concat())
            .collect()
    }

    /// The word token each syllable belongs to, one entry per syllable.
    pub fn word_per_syllable(&self) -> Vec<String> {
        let words = self.words();
        let mut out = Vec::with_capacity(self.len());
        for (w, &[s, e]) in words.iter().zip(&self.word_spans) {
            out.extend(std::iter::repeat_n(w.clone(), e - s));
        }
        out
    }

    pub fn normalized(&self, norm: &TokenNormalization) -> Self {
        LyricsSequence {
            syllables: self.syllables.iter().map(|s| norm.apply(s)).collect(),
            word_spans: self.word_spans.clone(),
        }
    }
}

/// Token normalization applied identically when training tables and when embedding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenNormalization {
    pub lowercase: bool,
    pub strip_punctuation: bool,
}

impl Default for TokenNormalization {
    fn default() -> Self {
        TokenNormalization {
            lowercase: true,
            strip_punctuation: true,
        }
    }
}

impl TokenNormalization {
    pub fn apply(&self, token: &str) -> String {
        let t: String = if self.strip_punctuation {
            token.chars().filter(|c| c.is_alphanumeric() || *c == '\'').collect()
        } else {
            token.to_string()
        };
        if self.lowercase {
            t.to_lowercase()
        } else {
            t
        }
    }
}

/// Splits raw lyrics into words on whitespace and into syllables on `-`.
///
/// ```
/// use conl2m::lyrics::{tokenize_lyrics, TokenNormalization};
///
/// let l = tokenize_lyrics("Yes-ter-day, all my trou-bles", &TokenNormalization::default()).unwrap();
/// assert_eq!(l.syllables, ["yes", "ter", "day", "all", "my", "trou", "bles"]);
/// assert_eq!(l.word_spans, [[0, 3], [3, 4], [4, 5], [5, 7]]);
/// ```
pub fn tokenize_lyrics(text: &str, norm: &TokenNormalization) -> Result<LyricsSequence> {
    let mut syllables = Vec::new();
    let mut spans = Vec::new();
    for word in text.split_whitespace() {
        let start = syllables.len();
        for syl in word.split('-') {
            let s = norm.apply(syl);
            if !s.is_empty() {
                syllables.push(s);
            }
        }
        if syllables.len() > start {
            spans.push([start, syllables.len()]);
        }
    }
    if syllables.is_empty() {
        return Err(Error::EmptySequence);
    }
    LyricsSequence::new(syllables, spans)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenLevel {
    Word,
    Syllable,
}

/// Token streams of one level, one stream per lyric sequence.
pub fn token_streams<'a>(lyrics: impl IntoIterator<Item = &'a LyricsSequence>, level: TokenLevel) -> Vec<Vec<String>> {
    lyrics
        .into_iter()
        .map(|l| match level {
            TokenLevel::Word => l.words(),
            TokenLevel::Syllable => l.syllables.clone(),
        })
        .collect()
}
