//! Model evaluation on a test corpus and deterministic report files.
//!
//! Structured records are line-delimited JSON plus a CSV table; plot data is
//! one JSON document per figure with axis labels and named series.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::bleu::{self_bleu_report, SelfBleuReport};
use super::metrics::{compute_metrics, style_mse, MetricRecord, RepetitionStrategy};
use super::sweep::{BoxSummary, SweepResult};
use crate::attr::Attribute;
use crate::error::{Error, Result};
use crate::melody::{MelodySequence, PairedSample};
use crate::model::{DecodeStrategy, Model};
use crate::style::StyleKey;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub seed: u64,
    pub strategy: DecodeStrategy,
    pub repetition: RepetitionStrategy,
    pub self_bleu_max_n: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            seed: 0,
            strategy: DecodeStrategy::Sample,
            repetition: RepetitionStrategy::default(),
            self_bleu_max_n: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub corpus_id: String,
    pub checkpoint_hash: Option<String>,
    pub options: EvalOptions,
    pub sequences: usize,
    pub generated: MetricRecord,
    pub ground_truth: MetricRecord,
    /// Radar order: PR, PA, PV, DR, DA, DV, RR, RA, RV.
    pub style_mse: [f64; 9],
    pub self_bleu: SelfBleuReport,
}

/// Generates one melody per test sample, conditioned on the sample's own
/// reference style, and scores the result against the ground truth.
pub fn evaluate_model(
    model: &Model,
    test: &[PairedSample],
    corpus_id: &str,
    checkpoint_hash: Option<String>,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let generations = model.generate_batch(&model.reference_inputs(test), opts.strategy, opts.seed)?;
    let generated: Vec<MelodySequence> = generations.iter().map(|g| g.melody.clone()).collect();
    let reference: Vec<MelodySequence> = test.iter().map(|s| s.melody.clone()).collect();
    let tokens: Vec<_> = generations.iter().map(|g| g.tokens.clone()).collect();
    Ok(EvalReport {
        corpus_id: corpus_id.to_string(),
        checkpoint_hash,
        options: opts.clone(),
        sequences: test.len(),
        generated: compute_metrics(&generated, opts.repetition)?,
        ground_truth: compute_metrics(&reference, opts.repetition)?,
        style_mse: style_mse(&generated, &reference)?,
        self_bleu: self_bleu_report(&tokens, opts.self_bleu_max_n)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    /// `<stem>.jsonl` and `<stem>.csv`.
    Records,
    /// `<stem>*.json` plot documents.
    PlotData,
}

/// Anything [`emit_report`] can write.
pub trait Report {
    /// File stem of the report.
    fn stem(&self) -> &'static str;
    fn csv_header(&self) -> Vec<&'static str>;
    /// Line records; each must carry every CSV column.
    fn records(&self) -> Vec<serde_json::Map<String, serde_json::Value>>;
    /// `(file suffix, document)` pairs.
    fn plot_data(&self) -> Vec<(&'static str, serde_json::Value)>;
}

fn object(v: serde_json::Value) -> serde_json::Map<String, serde_json::Value> {
    match v {
        serde_json::Value::Object(m) => m,
        _ => unreachable!("records are built from object literals"),
    }
}

impl Report for EvalReport {
    fn stem(&self) -> &'static str {
        "metrics"
    }

    fn csv_header(&self) -> Vec<&'static str> {
        vec!["metric", "generated", "ground_truth"]
    }

    fn records(&self) -> Vec<serde_json::Map<String, serde_json::Value>> {
        let gen = self.generated.values();
        let gt = self.ground_truth.values();
        MetricRecord::COLUMNS
            .iter()
            .enumerate()
            .map(|(i, name)| object(json!({"metric": name, "generated": gen[i], "ground_truth": gt[i]})))
            .collect()
    }

    fn plot_data(&self) -> Vec<(&'static str, serde_json::Value)> {
        let axes: Vec<String> = StyleKey::all().iter().map(|k| k.code()).collect();
        let radar = json!({
            "title": "style feature MSE",
            "axes": axes,
            "series": [{"name": self.corpus_id, "values": self.style_mse}],
        });
        let orders: Vec<usize> = (1..=self.self_bleu.max_n).collect();
        let mut series = vec![json!({"name": "combined", "values": self.self_bleu.combined})];
        for a in Attribute::ALL {
            series.push(json!({"name": a.name(), "values": self.self_bleu.per_attribute[a]}));
        }
        let bleu = json!({
            "title": "Self-BLEU",
            "x_label": "n-gram order",
            "y_label": "Self-BLEU",
            "x": orders,
            "series": series,
        });
        vec![("_radar", radar), ("_self_bleu", bleu)]
    }
}

fn box_record(feature: &str, series: &str, candidate: f64, b: &BoxSummary) -> serde_json::Map<String, serde_json::Value> {
    object(json!({
        "feature": feature,
        "series": series,
        "candidate": candidate,
        "count": b.count,
        "mean": b.mean,
        "min": b.min,
        "q1": b.q1,
        "median": b.median,
        "q3": b.q3,
        "max": b.max,
        "whisker_low": b.whisker_low,
        "whisker_high": b.whisker_high,
    }))
}

impl Report for SweepResult {
    fn stem(&self) -> &'static str {
        "sweep"
    }

    fn csv_header(&self) -> Vec<&'static str> {
        vec![
            "feature", "series", "candidate", "count", "mean", "min", "q1", "median", "q3", "max", "whisker_low",
            "whisker_high",
        ]
    }

    fn records(&self) -> Vec<serde_json::Map<String, serde_json::Value>> {
        let code = self.key.to_string();
        let mut out = Vec::new();
        for p in &self.points {
            if let Some(b) = &p.feature {
                out.push(box_record(&code, "feature", p.candidate, b));
            }
            if let Some(b) = &p.attribute {
                out.push(box_record(&code, "attribute", p.candidate, b));
            }
        }
        out
    }

    fn plot_data(&self) -> Vec<(&'static str, serde_json::Value)> {
        let boxes: Vec<_> = self
            .points
            .iter()
            .map(|p| json!({"candidate": p.candidate, "feature": p.feature, "attribute": p.attribute}))
            .collect();
        let doc = json!({
            "title": format!("{} sweep", self.key),
            "x_label": "control value",
            "y_label": format!("generated {}", self.key.attribute.name()),
            "fixed_value": self.fixed_value,
            "seed": self.seed,
            "sequences": self.sequences,
            "boxes": boxes,
            "spearman": self.spearman,
        });
        vec![("_boxplot", doc)]
    }
}

fn csv_cell(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Writes `report` into `dir` (created if missing) and returns the paths written.
/// The same report always produces byte-identical files.
pub fn emit_report(report: &impl Report, dir: impl AsRef<Path>, format: ReportFormat) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    match format {
        ReportFormat::Records => {
            let records = report.records();
            let path = dir.join(format!("{}.jsonl", report.stem()));
            let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
            for r in &records {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            written.push(path);

            let path = dir.join(format!("{}.csv", report.stem()));
            let header = report.csv_header();
            let mut w = csv::Writer::from_path(&path).map_err(|e| Error::io(&path, e.into()))?;
            w.write_record(&header).map_err(|e| Error::io(&path, e.into()))?;
            for r in &records {
                let row: Vec<String> = header
                    .iter()
                    .map(|h| r.get(*h).map(csv_cell).unwrap_or_default())
                    .collect();
                w.write_record(&row).map_err(|e| Error::io(&path, e.into()))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        ReportFormat::PlotData => {
            for (suffix, doc) in report.plot_data() {
                let path = dir.join(format!("{}{suffix}.json", report.stem()));
                let mut bytes = serde_json::to_vec_pretty(&doc)?;
                bytes.push(b'\n');
                fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
