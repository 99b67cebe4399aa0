use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{MelodySequence, NoteEvent, VocabManifest};
use crate::attr::{Attribute, PerAttr};
use crate::error::{Error, Result};
use crate::lyrics::LyricsSequence;
use crate::rng::stream_rng;
use crate::style::{extract_style_features, StyleFeatures};

/// Aligned lyrics, melody and their cached style statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pub id: String,
    pub lyrics: LyricsSequence,
    pub melody: MelodySequence,
    pub style: StyleFeatures,
}

impl PairedSample {
    pub fn new(id: impl Into<String>, lyrics: LyricsSequence, melody: MelodySequence) -> Result<Self> {
        if lyrics.len() != melody.len() {
            return Err(Error::DimensionMismatch {
                what: "syllables vs notes".into(),
                expected: melody.len(),
                found: lyrics.len(),
            });
        }
        let style = extract_style_features(&melody)?;
        Ok(PairedSample {
            id: id.into(),
            lyrics,
            melody,
            style,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    /// One JSON object per line: `{"id", "syllables", "word_spans", "notes"}`.
    Jsonl,
    /// One CSV row per note: `song_id,syllable,word,pitch,duration,rest`.
    /// Consecutive rows sharing `song_id` form one sample; `word` is the
    /// word index within the sample.
    Csv,
}

impl CorpusFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "jsonl" | "json" => Some(CorpusFormat::Jsonl),
            "csv" => Some(CorpusFormat::Csv),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub record: usize,
    pub id: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestLog {
    pub source: String,
    pub records: usize,
    pub accepted: usize,
    pub skipped: Vec<SkippedRecord>,
}

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    id: String,
    syllables: Vec<String>,
    word_spans: Vec<[usize; 2]>,
    notes: Vec<(u8, f64, f64)>,
}

struct RawRecord {
    id: String,
    syllables: Vec<String>,
    word_spans: Vec<[usize; 2]>,
    notes: Vec<NoteEvent>,
}

/// Reads a corpus file. Records whose syllable and note counts differ, or
/// that are too short for style statistics, are skipped and logged.
/// When `vocab` is given, every value must be a vocabulary member.
pub fn ingest_corpus(
    path: impl AsRef<Path>,
    format: CorpusFormat,
    vocab: Option<&VocabManifest>,
) -> Result<(Vec<PairedSample>, IngestLog)> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::CorpusNotFound(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_corpus_str(&text, format, vocab, &path.display().to_string())
}

/// [`ingest_corpus`] over in-memory text.
pub fn read_corpus_str(
    text: &str,
    format: CorpusFormat,
    vocab: Option<&VocabManifest>,
    source: &str,
) -> Result<(Vec<PairedSample>, IngestLog)> {
    let raw = match format {
        CorpusFormat::Jsonl => parse_jsonl(text, source)?,
        CorpusFormat::Csv => parse_csv(text, source)?,
    };
    let mut log = IngestLog {
        source: source.to_string(),
        records: raw.len(),
        ..Default::default()
    };
    let mut samples = Vec::with_capacity(raw.len());
    for (record, r) in raw.into_iter().enumerate() {
        let skip = |reason: String| SkippedRecord {
            record,
            id: r.id.clone(),
            reason,
        };
        if r.syllables.len() != r.notes.len() {
            log.skipped.push(skip(format!(
                "alignment mismatch: {} syllables, {} notes",
                r.syllables.len(),
                r.notes.len()
            )));
            continue;
        }
        if r.notes.len() < 2 {
            log.skipped.push(skip(format!("too short: {} notes", r.notes.len())));
            continue;
        }
        let lyrics = match LyricsSequence::new(r.syllables, r.word_spans) {
            Ok(l) => l,
            Err(e) => {
                log.skipped.push(skip(format!("bad word spans: {e}")));
                continue;
            }
        };
        let melody = MelodySequence::new(r.notes);
        if let Some(v) = vocab {
            v.encode(&melody)?;
        }
        samples.push(PairedSample::new(r.id, lyrics, melody)?);
    }
    log.accepted = samples.len();
    for s in &log.skipped {
        log::info!("{source}: skipped record {} ({}): {}", s.record, s.id, s.reason);
    }
    Ok((samples, log))
}

fn parse_jsonl(text: &str, source: &str) -> Result<Vec<RawRecord>> {
    let mut out = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRecord = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            context: source.to_string(),
            record: line_no + 1,
            message: e.to_string(),
        })?;
        let notes = rec
            .notes
            .into_iter()
            .map(|(p, d, r)| NoteEvent::new(p, d, r))
            .collect::<Vec<_>>();
        check_notes(&notes, source, line_no + 1)?;
        out.push(RawRecord {
            id: rec.id,
            syllables: rec.syllables,
            word_spans: rec.word_spans,
            notes,
        });
    }
    Ok(out)
}

fn check_notes(notes: &[NoteEvent], source: &str, record: usize) -> Result<()> {
    for n in notes {
        if !(n.duration.is_finite() && n.duration > 0.0 && n.rest.is_finite() && n.rest >= 0.0) {
            return Err(Error::MalformedRecord {
                context: source.to_string(),
                record,
                message: format!("invalid note {n:?}"),
            });
        }
        if n.pitch > 127 {
            return Err(Error::MalformedRecord {
                context: source.to_string(),
                record,
                message: format!("pitch {} outside MIDI range", n.pitch),
            });
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct CsvRow {
    song_id: String,
    syllable: String,
    word: usize,
    pitch: u8,
    duration: f64,
    rest: f64,
}

fn parse_csv(text: &str, source: &str) -> Result<Vec<RawRecord>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out: Vec<RawRecord> = Vec::new();
    let mut words: Vec<Vec<usize>> = Vec::new();
    for (row_no, row) in reader.deserialize::<CsvRow>().enumerate() {
        let row = row.map_err(|e| Error::MalformedRecord {
            context: source.to_string(),
            record: row_no + 2,
            message: e.to_string(),
        })?;
        let note = NoteEvent::new(row.pitch, row.duration, row.rest);
        check_notes(&[note], source, row_no + 2)?;
        if out.last().map(|r| r.id != row.song_id).unwrap_or(true) {
            out.push(RawRecord {
                id: row.song_id.clone(),
                syllables: Vec::new(),
                word_spans: Vec::new(),
                notes: Vec::new(),
            });
            words.push(Vec::new());
        }
        let rec = out.last_mut().expect("pushed above");
        rec.syllables.push(row.syllable);
        rec.notes.push(note);
        words.last_mut().expect("pushed above").push(row.word);
    }
    for (rec, word_ids) in out.iter_mut().zip(words) {
        rec.word_spans = spans_from_word_ids(&word_ids);
    }
    Ok(out)
}

fn spans_from_word_ids(ids: &[usize]) -> Vec<[usize; 2]> {
    let mut spans: Vec<[usize; 2]> = Vec::new();
    for (i, &w) in ids.iter().enumerate() {
        match spans.last_mut() {
            Some(span) if i > 0 && ids[i - 1] == w => span[1] = i + 1,
            _ => spans.push([i, i + 1]),
        }
    }
    spans
}

/// Writes samples in the JSONL record format.
pub fn write_corpus(path: impl AsRef<Path>, samples: &[PairedSample]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        let rec = JsonRecord {
            id: s.id.clone(),
            syllables: s.lyrics.syllables.clone(),
            word_spans: s.lyrics.word_spans.clone(),
            notes: s.melody.notes.iter().map(|n| (n.pitch, n.duration, n.rest)).collect(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Inclusive bounds on style statistics used to drop unsingable melodies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterBounds {
    pub pitch_range: (f64, f64),
    pub pitch_average: (f64, f64),
    pub duration_range: (f64, f64),
    pub duration_average: (f64, f64),
    pub rest_range: (f64, f64),
}

impl Default for FilterBounds {
    fn default() -> Self {
        FilterBounds {
            pitch_range: (0.0, 48.0),
            pitch_average: (36.0, 84.0),
            duration_range: (0.0, 8.0),
            duration_average: (0.0, 4.0),
            rest_range: (0.0, 8.0),
        }
    }
}

fn within(x: f64, (lo, hi): (f64, f64)) -> bool {
    x >= lo && x <= hi
}

pub fn passes_filter(style: &StyleFeatures, bounds: &FilterBounds) -> bool {
    let p = &style[Attribute::Pitch];
    let d = &style[Attribute::Duration];
    let r = &style[Attribute::Rest];
    within(p.range, bounds.pitch_range)
        && within(p.average, bounds.pitch_average)
        && within(d.range, bounds.duration_range)
        && within(d.average, bounds.duration_average)
        && within(r.range, bounds.rest_range)
}

/// Keeps the samples whose statistics satisfy the default singability bounds, in order.
pub fn filter_dataset(samples: &[PairedSample]) -> Vec<PairedSample> {
    let bounds = FilterBounds::default();
    samples
        .iter()
        .filter(|s| passes_filter(&s.style, &bounds))
        .cloned()
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<PairedSample>,
    pub valid: Vec<PairedSample>,
    pub test: Vec<PairedSample>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.valid.len(), self.test.len())
    }
}

/// Seeded shuffle, then partition by `ratios`. Each partition keeps the
/// original corpus order.
pub fn split_dataset(samples: &[PairedSample], ratios: (u32, u32, u32), seed: u64) -> Result<DatasetSplit> {
    if samples.len() < 10 {
        return Err(Error::TooFewSamples {
            found: samples.len(),
            needed: 10,
        });
    }
    let total = f64::from(ratios.0 + ratios.1 + ratios.2);
    if total == 0.0 {
        return Err(Error::InvalidConfig("split ratios sum to zero".into()));
    }
    let n = samples.len();
    let n_train = (n as f64 * f64::from(ratios.0) / total).round() as usize;
    let n_valid = ((n as f64 * f64::from(ratios.1) / total).round() as usize).min(n - n_train);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, "split", 0));
    let mut parts = [
        order[..n_train].to_vec(),
        order[n_train..n_train + n_valid].to_vec(),
        order[n_train + n_valid..].to_vec(),
    ];
    for p in &mut parts {
        p.sort_unstable();
    }
    let take = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
    Ok(DatasetSplit {
        train: take(&parts[0]),
        valid: take(&parts[1]),
        test: take(&parts[2]),
        seed,
    })
}

/// Value counts per attribute, keyed by the value's decimal rendering, for
/// auditing the corpus shape.
pub fn attribute_histograms(samples: &[PairedSample]) -> PerAttr<Vec<(f64, usize)>> {
    PerAttr::from_fn(|a| {
        let mut counts: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
        for s in samples {
            for v in s.melody.values(a) {
                // order-preserving key for non-negative floats
                counts.entry(v.to_bits()).or_insert((v, 0)).1 += 1;
            }
        }
        counts.into_values().collect()
    })
}
