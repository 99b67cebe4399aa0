use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::LyricsSequence;
use crate::error::{Error, Result};

/// Token → vector lookup with a mean-of-table fallback for unknown tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Array2<f64>,
    oov: Array1<f64>,
}

impl EmbeddingTable {
    pub fn new(tokens: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyTable);
        }
        if tokens.len() != vectors.nrows() {
            return Err(Error::DimensionMismatch {
                what: "embedding rows".into(),
                expected: tokens.len(),
                found: vectors.nrows(),
            });
        }
        if vectors.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("embedding table".into()));
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let oov = vectors.mean_axis(Axis(0)).expect("non-empty table");
        Ok(EmbeddingTable {
            tokens,
            index,
            vectors,
            oov,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn vector(&self, token: &str) -> Option<ArrayView1<'_, f64>> {
        self.index.get(token).map(|&i| self.vectors.row(i))
    }

    /// The vector used for tokens absent from the table: the mean of all rows.
    pub fn oov_vector(&self) -> ArrayView1<'_, f64> {
        self.oov.view()
    }

    /// Vector for `token`, plus whether the fallback was used.
    pub fn lookup(&self, token: &str) -> (ArrayView1<'_, f64>, bool) {
        match self.vector(token) {
            Some(v) => (v, false),
            None => (self.oov.view(), true),
        }
    }

    /// Text vector format: a `count dim` header, then `token v1 … vdim` per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.len(), self.dim());
        for (tok, row) in self.tokens.iter().zip(self.vectors.rows()) {
            out.push_str(tok);
            for x in row {
                write!(out, " {x}").expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((_, header)) = lines.next() else {
            return Err(Error::EmptyTable);
        };
        let mut head = header.split_whitespace();
        let parse_usize = |s: Option<&str>| -> Result<usize> {
            s.and_then(|x| x.parse().ok()).ok_or_else(|| Error::TableParse {
                row: 0,
                message: format!("bad header {header:?}, expected \"count dim\""),
            })
        };
        let count = parse_usize(head.next())?;
        let dim = parse_usize(head.next())?;
        let mut tokens = Vec::with_capacity(count);
        let mut data = Vec::with_capacity(count * dim);
        for (line_no, line) in lines {
            let mut parts = line.split_whitespace();
            let token = parts.next().expect("line is non-empty");
            let values: Vec<&str> = parts.collect();
            if values.len() != dim {
                return Err(Error::TableParse {
                    row: line_no,
                    message: format!("token {token:?} has {} values, expected {dim}", values.len()),
                });
            }
            for v in values {
                data.push(v.parse::<f64>().map_err(|e| Error::TableParse {
                    row: line_no,
                    message: format!("{v:?}: {e}"),
                })?);
            }
            tokens.push(token.to_string());
        }
        if tokens.is_empty() {
            return Err(Error::EmptyTable);
        }
        if tokens.len() != count {
            return Err(Error::TableParse {
                row: 0,
                message: format!("header declares {count} rows, found {}", tokens.len()),
            });
        }
        let vectors = Array2::from_shape_vec((count, dim), data).expect("row widths checked");
        EmbeddingTable::new(tokens, vectors)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Loads a table in the text vector format, checking its width when `expected_dim` is given.
pub fn load_embedding_table(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let table = EmbeddingTable::from_text(&text)?;
    if let Some(d) = expected_dim {
        if table.dim() != d {
            return Err(Error::DimensionMismatch {
                what: format!("embedding table {}", path.display()),
                expected: d,
                found: table.dim(),
            });
        }
    }
    Ok(table)
}

impl Serialize for EmbeddingTable {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_text().serialize(s)
    }
}

impl<'de> Deserialize<'de> for EmbeddingTable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        EmbeddingTable::from_text(&text).map_err(serde::de::Error::custom)
    }
}

/// `T × (D_word + D_syllable)` lyric vectors, with out-of-vocabulary counts.
#[derive(Clone, Debug, PartialEq)]
pub struct LyricEmbedding {
    pub vectors: Array2<f64>,
    pub oov_words: usize,
    pub oov_syllables: usize,
}

impl LyricEmbedding {
    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }
}

/// Row `t` is the vector of syllable `t`'s word followed by the syllable's own vector.
pub fn embed_lyrics(lyrics: &LyricsSequence, word_table: &EmbeddingTable, syllable_table: &EmbeddingTable) -> LyricEmbedding {
    let dw = word_table.dim();
    let ds = syllable_table.dim();
    let mut vectors = Array2::zeros((lyrics.len(), dw + ds));
    let mut oov_words = 0;
    let mut oov_syllables = 0;
    let words = lyrics.word_per_syllable();
    for (t, (word, syl)) in words.iter().zip(&lyrics.syllables).enumerate() {
        let (wv, w_oov) = word_table.lookup(word);
        let (sv, s_oov) = syllable_table.lookup(syl);
        oov_words += usize::from(w_oov);
        oov_syllables += usize::from(s_oov);
        let mut row = vectors.row_mut(t);
        row.slice_mut(ndarray::s![..dw]).assign(&wv);
        row.slice_mut(ndarray::s![dw..]).assign(&sv);
    }
    LyricEmbedding {
        vectors,
        oov_words,
        oov_syllables,
    }
}
