//! The `conl2m` command line. Every subcommand wraps one library operation;
//! results go to stdout as JSON, progress to stderr as one JSON object per line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use conl2m::eval::{controllability_sweep, emit_report, evaluate_model, EvalOptions, ReportFormat};
use conl2m::lyrics::{load_embedding_table, token_streams, train_skipgram, LyricsSequence, SkipGramConfig, TokenLevel, TokenNormalization};
use conl2m::melody::{
    export_midi, filter_dataset, ingest_corpus, split_dataset, write_corpus, CorpusFormat, MidiOptions, PairedSample,
    PianoRoll, VocabManifest,
};
use conl2m::model::{AssetOptions, Checkpoint, DecodeStrategy, Model, ModelAssets};
use conl2m::net::{BranchConfig, DiscConfig};
use conl2m::style::StyleKey;
use conl2m::train::{RunOutputs, TrainConfig, Trainer, TrainingData};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::api::{self, GenerateRequest, GenerateResponse};
use crate::service::{AppState, CheckpointRegistry, GenerationStore};

#[derive(Parser, Debug)]
#[command(name = "conl2m", version, about = "Controllable lyrics-to-melody generation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Read a raw corpus file and write it as line-delimited records.
    Ingest(IngestArgs),
    /// Drop melodies outside the singability bounds.
    Filter(FilterArgs),
    /// Seeded train/valid/test partition.
    Split(SplitArgs),
    /// Train word and syllable skip-gram tables.
    TrainEmbeddings(EmbeddingArgs),
    /// Fit assets and train a model from a run config.
    Train(TrainArgs),
    /// Score a checkpoint on a test corpus.
    Evaluate(EvaluateArgs),
    /// Controllability sweep of one style feature.
    Sweep(SweepArgs),
    /// Generate one melody for a lyric.
    Generate(GenerateArgs),
    /// Run the HTTP generation service.
    Serve(ServeArgs),
    /// Three style settings for one lyric: a baseline, higher pitch, busier rhythm.
    CaseStudy(CaseStudyArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FormatArg {
    Jsonl,
    Csv,
}

impl From<FormatArg> for CorpusFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Jsonl => CorpusFormat::Jsonl,
            FormatArg::Csv => CorpusFormat::Csv,
        }
    }
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Inferred from the file extension when absent.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Reject values outside this vocabulary manifest.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Receives train.jsonl, valid.jsonl and test.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "8,1,1", value_parser = parse_ratios)]
    pub ratios: (u32, u32, u32),
}

#[derive(Args, Debug)]
pub struct EmbeddingArgs {
    /// Training corpus; tables are fitted on its lyrics.
    #[arg(long)]
    pub input: PathBuf,
    /// Receives words.vec and syllables.vec.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub dim: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    #[arg(long, default_value_t = 5)]
    pub negatives: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// JSON run config; see [`RunConfig`].
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Seeds the split, the assets and training.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub adversarial_epochs: Option<usize>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Test corpus (line-delimited records).
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub greedy: bool,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Swept feature, e.g. `pitch.avg`.
    #[arg(long, value_parser = parse_key)]
    pub feature: StyleKey,
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.4,0.6,0.8")]
    pub candidates: Vec<f64>,
    /// Value of every other control.
    #[arg(long, default_value_t = api::DEFAULT_CONTROL)]
    pub fixed: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
#[group(id = "lyric_source", required = true, multiple = false, args = ["lyrics", "text"])]
pub struct LyricSource {
    /// File holding the lyric text.
    #[arg(long)]
    pub lyrics: Option<PathBuf>,
    /// The lyric text itself.
    #[arg(long)]
    pub text: Option<String>,
}

impl LyricSource {
    fn read(&self) -> anyhow::Result<String> {
        match (&self.lyrics, &self.text) {
            (Some(p), _) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())),
            (None, Some(t)) => Ok(t.clone()),
            (None, None) => bail!("one of --lyrics or --text is required"),
        }
    }
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub source: LyricSource,
    /// `feature=value`, repeatable; unset controls are 0.5.
    #[arg(long = "control", value_parser = api::parse_assignment)]
    pub controls: Vec<(String, f64)>,
    /// Drawn at random and printed when absent.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the piano-roll JSON here.
    #[arg(long)]
    pub pianoroll: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// Directory of `<id>.json` checkpoints.
    #[arg(long)]
    pub checkpoints: PathBuf,
    /// Checkpoint id used when a request names none.
    #[arg(long, default_value = "latest")]
    pub default: String,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Keep generations on disk as well as in memory.
    #[arg(long)]
    pub persist: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CaseStudyArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub source: LyricSource,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn parse_ratios(s: &str) -> Result<(u32, u32, u32), String> {
    let parts: Vec<u32> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, c] if a + b + c > 0 => Ok((a, b, c)),
        _ => Err("expected three comma-separated weights, e.g. 8,1,1".into()),
    }
}

fn parse_key(s: &str) -> Result<StyleKey, String> {
    StyleKey::parse(s).ok_or_else(|| format!("unknown style feature {s:?}; expected e.g. pitch.avg"))
}

/// A training run: where the corpus is and how to turn it into a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: PathBuf,
    /// Inferred from the corpus extension when absent.
    pub format: Option<CorpusFormat>,
    pub out_dir: PathBuf,
    /// Apply the singability filter before splitting.
    pub filter: bool,
    pub ratios: (u32, u32, u32),
    pub split_seed: u64,
    pub assets: AssetOptions,
    /// Pre-trained tables from `train-embeddings`; both or neither.
    pub word_table: Option<PathBuf>,
    pub syllable_table: Option<PathBuf>,
    /// Shrink every layer to this width; the published sizes when absent.
    pub uniform_width: Option<usize>,
    pub fused_gates: bool,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: PathBuf::from("corpus.jsonl"),
            format: None,
            out_dir: PathBuf::from("run"),
            filter: true,
            ratios: (8, 1, 1),
            split_seed: 0,
            assets: AssetOptions::default(),
            word_table: None,
            syllable_table: None,
            uniform_width: None,
            fused_gates: false,
            train: TrainConfig::default(),
        }
    }
}

fn status(v: serde_json::Value) {
    eprintln!("{v}");
}

fn print_json(v: &impl Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn read_corpus(path: &Path, format: Option<CorpusFormat>) -> anyhow::Result<Vec<PairedSample>> {
    let format = format.unwrap_or_else(|| CorpusFormat::from_path(path));
    let (samples, log) = ingest_corpus(path, format, None)?;
    status(json!({"stage": "read", "path": path, "records": log.records, "accepted": log.accepted}));
    Ok(samples)
}

fn load_checkpoint(path: &Path) -> anyhow::Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

pub fn ingest(a: &IngestArgs) -> anyhow::Result<()> {
    let vocab = a.vocab.as_ref().map(VocabManifest::load).transpose()?;
    let format = a.format.map(Into::into).unwrap_or_else(|| CorpusFormat::from_path(&a.input));
    let (samples, log) = ingest_corpus(&a.input, format, vocab.as_ref())?;
    write_corpus(&a.out, &samples)?;
    print_json(&log)
}

pub fn filter(a: &FilterArgs) -> anyhow::Result<()> {
    let samples = read_corpus(&a.input, None)?;
    let kept = filter_dataset(&samples);
    write_corpus(&a.out, &kept)?;
    print_json(&json!({"input": samples.len(), "kept": kept.len()}))
}

pub fn split(a: &SplitArgs) -> anyhow::Result<()> {
    let samples = read_corpus(&a.input, None)?;
    let s = split_dataset(&samples, a.ratios, a.seed)?;
    for (name, part) in [("train", &s.train), ("valid", &s.valid), ("test", &s.test)] {
        write_corpus(a.out_dir.join(format!("{name}.jsonl")), part)?;
    }
    let (train, valid, test) = s.sizes();
    print_json(&json!({"seed": a.seed, "train": train, "valid": valid, "test": test}))
}

pub fn train_embeddings(a: &EmbeddingArgs) -> anyhow::Result<()> {
    let samples = read_corpus(&a.input, None)?;
    let norm = TokenNormalization::default();
    let lyrics: Vec<LyricsSequence> = samples.iter().map(|s| s.lyrics.normalized(&norm)).collect();
    let cfg = SkipGramConfig {
        dim: a.dim,
        window: a.window,
        negatives: a.negatives,
        epochs: a.epochs,
        seed: a.seed,
        ..SkipGramConfig::default()
    };
    std::fs::create_dir_all(&a.out_dir)?;
    let mut summary = BTreeMap::new();
    for (level, file, seed) in [(TokenLevel::Word, "words.vec", a.seed), (TokenLevel::Syllable, "syllables.vec", a.seed + 1)] {
        let table = train_skipgram(&token_streams(&lyrics, level), &SkipGramConfig { seed, ..cfg.clone() })?;
        table.save(a.out_dir.join(file))?;
        status(json!({"stage": "train-embeddings", "file": file, "tokens": table.len()}));
        summary.insert(file, table.len());
    }
    print_json(&json!({"dim": a.dim, "tokens": summary}))
}

/// Builds the run config from an optional file and flag overrides.
pub fn run_config(a: &TrainArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(c) = &a.corpus {
        cfg.corpus = c.clone();
    }
    if let Some(o) = &a.out_dir {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = a.seed {
        cfg.split_seed = s;
        cfg.train.seed = s;
    }
    if let Some(e) = a.pretrain_epochs {
        cfg.train.pretrain_epochs = e;
    }
    if let Some(e) = a.adversarial_epochs {
        cfg.train.adversarial_epochs = e;
    }
    Ok(cfg)
}

/// Reads, filters and splits the corpus, fits assets and initializes a model.
pub fn prepare_run(cfg: &RunConfig) -> anyhow::Result<(Model, conl2m::melody::DatasetSplit)> {
    let mut samples = read_corpus(&cfg.corpus, cfg.format)?;
    if cfg.filter {
        samples = filter_dataset(&samples);
        status(json!({"stage": "filter", "kept": samples.len()}));
    }
    let split = split_dataset(&samples, cfg.ratios, cfg.split_seed)?;
    let assets = match (&cfg.word_table, &cfg.syllable_table) {
        (Some(w), Some(s)) => ModelAssets::with_tables(
            &samples,
            &split.train,
            &cfg.assets,
            load_embedding_table(w, None)?,
            load_embedding_table(s, None)?,
        )?,
        (None, None) => ModelAssets::fit(&samples, &split.train, &cfg.assets)?,
        _ => bail!("word_table and syllable_table must be given together"),
    };
    let mut config = assets.standard_config();
    config.fused_gates = cfg.fused_gates;
    if let Some(w) = cfg.uniform_width {
        config.branches = config.branches.map(|_, b| BranchConfig {
            embed_dim: w,
            hidden_dim: w,
            lstm_units: w,
            ..*b
        });
        config.discriminator = DiscConfig {
            embed_dims: conl2m::attr::PerAttr::new(w, w, w),
            hidden_dim: w,
            lstm_units: w,
        };
    }
    let model = Model::init(&config, assets, cfg.train.seed)?;
    Ok((model, split))
}

pub fn train(a: &TrainArgs) -> anyhow::Result<()> {
    let cfg = run_config(a)?;
    let (model, split) = prepare_run(&cfg)?;
    let out = &cfg.out_dir;
    for (name, part) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
        write_corpus(out.join("split").join(format!("{name}.jsonl")), part)?;
    }
    std::fs::write(out.join("run.json"), serde_json::to_vec_pretty(&cfg)?)?;
    let mut trainer = match &a.resume {
        Some(p) => Trainer::resume(load_checkpoint(p)?)?,
        None => Trainer::new(model, cfg.train.clone())?,
    };
    let train = TrainingData::prepare(&split.train, &trainer.model.assets)?;
    let valid = TrainingData::prepare(&split.valid, &trainer.model.assets)?;
    let outputs = RunOutputs {
        log: Some(out.join("train.jsonl")),
        checkpoint_dir: Some(out.join("checkpoints")),
    };
    let total = trainer.config.total_epochs();
    trainer.run_with(&train, Some(&valid), &outputs, |r| {
        status(json!({"stage": "train", "epoch": r.epoch, "of": total, "record": r}));
    })?;
    let ckpt = trainer.checkpoint();
    print_json(&json!({
        "epochs": trainer.state.epoch,
        "checkpoint": out.join("checkpoints/latest.json"),
        "checkpoint_hash": ckpt.content_hash()?,
        "split": split.sizes(),
    }))
}

pub fn evaluate(a: &EvaluateArgs) -> anyhow::Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let test = read_corpus(&a.corpus, None)?;
    let opts = EvalOptions {
        seed: a.seed,
        strategy: if a.greedy { DecodeStrategy::Greedy } else { DecodeStrategy::Sample },
        ..EvalOptions::default()
    };
    let corpus_id = a.corpus.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let report = evaluate_model(&ckpt.model, &test, &corpus_id, Some(ckpt.content_hash()?), &opts)?;
    let mut files = emit_report(&report, &a.out_dir, ReportFormat::Records)?;
    files.extend(emit_report(&report, &a.out_dir, ReportFormat::PlotData)?);
    status(json!({"stage": "evaluate", "files": files}));
    print_json(&report)
}

pub fn sweep(a: &SweepArgs) -> anyhow::Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let lyrics = read_corpus(&a.corpus, None)?;
    let result = controllability_sweep(&ckpt.model, &lyrics, a.feature, &a.candidates, a.fixed, a.seed)?;
    let mut files = emit_report(&result, &a.out_dir, ReportFormat::Records)?;
    files.extend(emit_report(&result, &a.out_dir, ReportFormat::PlotData)?);
    status(json!({"stage": "sweep", "files": files}));
    print_json(&result)
}

/// Generates for `req` with the model of the checkpoint at `path`.
pub fn generate_with(path: &Path, req: &GenerateRequest) -> anyhow::Result<(GenerateResponse, LyricsSequence)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let ckpt = Checkpoint::from_bytes(&bytes)?;
    let hash = {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(&bytes))
    };
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let seed = req.seed.unwrap_or_else(api::random_seed);
    Ok(api::generate(&ckpt.model, &id, &hash, req, seed)?)
}

pub fn generate(a: &GenerateArgs) -> anyhow::Result<()> {
    let req = GenerateRequest {
        lyrics: a.source.read()?,
        controls: a.controls.iter().cloned().collect(),
        seed: a.seed,
        checkpoint: None,
    };
    let (resp, lyrics) = generate_with(&a.checkpoint, &req)?;
    export_midi(&resp.melody, &MidiOptions::default(), &a.out)?;
    if let Some(p) = &a.pianoroll {
        std::fs::write(p, serde_json::to_vec_pretty(&PianoRoll::new(&resp.melody, &lyrics, None)?)?)?;
    }
    status(json!({"stage": "generate", "midi": a.out, "seed": resp.request.seed}));
    print_json(&resp)
}

/// Normalized `[range, average, variance]` controls of one attribute.
pub type Triplet = [f64; 3];

/// The three style settings of the case study: file stem, then pitch, duration and rest triplets.
pub const CASE_STUDY: [(&str, Triplet, Triplet, Triplet); 3] = [
    ("baseline", [0.7, 0.7, 0.8], [0.1, 0.1, 0.1], [0.1, 0.1, 0.1]),
    ("higher-pitch", [0.3, 0.9, 0.1], [0.1, 0.1, 0.1], [0.1, 0.1, 0.1]),
    ("busier-rhythm", [0.3, 0.9, 0.1], [0.2, 0.1, 0.3], [0.3, 0.1, 0.2]),
];

pub fn case_study_requests(lyrics: &str, seed: u64) -> Vec<(&'static str, GenerateRequest)> {
    CASE_STUDY
        .iter()
        .map(|&(name, p, d, r)| {
            let mut controls = BTreeMap::new();
            for (attr, triplet) in [("pitch", p), ("duration", d), ("rest", r)] {
                for (feature, v) in ["rng", "avg", "var"].into_iter().zip(triplet) {
                    controls.insert(format!("{attr}.{feature}"), v);
                }
            }
            let req = GenerateRequest {
                lyrics: lyrics.to_string(),
                controls,
                seed: Some(seed),
                checkpoint: None,
            };
            (name, req)
        })
        .collect()
}

pub fn case_study(a: &CaseStudyArgs) -> anyhow::Result<()> {
    let text = a.source.read()?;
    std::fs::create_dir_all(&a.out_dir)?;
    let mut results = Vec::new();
    for (name, req) in case_study_requests(&text, a.seed) {
        let (resp, _) = generate_with(&a.checkpoint, &req)?;
        let path = a.out_dir.join(format!("{name}.mid"));
        export_midi(&resp.melody, &MidiOptions::default(), &path)?;
        status(json!({"stage": "case-study", "variant": name, "midi": path}));
        results.push(json!({"variant": name, "midi": path, "response": resp}));
    }
    print_json(&results)
}

pub fn serve(a: &ServeArgs) -> anyhow::Result<()> {
    let state = Arc::new(AppState {
        checkpoints: CheckpointRegistry::open(&a.checkpoints, Some(a.default.clone()))?,
        generations: GenerationStore::new(a.persist.clone())?,
    });
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(crate::service::serve(state, &a.addr))
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Filter(a) => filter(a),
        Command::Split(a) => split(a),
        Command::TrainEmbeddings(a) => train_embeddings(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
        Command::Generate(a) => generate(a),
        Command::Serve(a) => serve(a),
        Command::CaseStudy(a) => case_study(a),
    }
}
