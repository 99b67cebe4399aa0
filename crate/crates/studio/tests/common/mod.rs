#![allow(dead_code)]

use std::path::{Path, PathBuf};

use conl2m::lyrics::{LyricsSequence, SkipGramConfig};
use conl2m::melody::toy::{toy_corpus, ToyCorpusConfig};
use conl2m::melody::{write_corpus, PairedSample};
use conl2m::model::Checkpoint;
use conl2m::train::{RunOutputs, TrainConfig, Trainer, TrainingData};
use conl2m_studio::cli::{prepare_run, RunConfig};

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub corpus: Vec<PairedSample>,
    pub checkpoint: Checkpoint,
}

impl Fixture {
    pub fn corpus_path(&self) -> PathBuf {
        self.dir.path().join("corpus.jsonl")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.dir.path().join("checkpoints")
    }

    pub fn latest(&self) -> PathBuf {
        self.checkpoints().join("latest.json")
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

/// Words joined by spaces, syllables by hyphens.
pub fn lyric_text(l: &LyricsSequence) -> String {
    l.word_spans
        .iter()
        .map(|&[a, b]| l.syllables[a..b].join("-"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// A narrow run config that trains in well under a second.
pub fn small_run(corpus: &Path, out: &Path) -> RunConfig {
    let sg = SkipGramConfig {
        dim: 8,
        epochs: 1,
        ..SkipGramConfig::default()
    };
    let mut cfg = RunConfig {
        corpus: corpus.to_path_buf(),
        out_dir: out.to_path_buf(),
        uniform_width: Some(8),
        train: TrainConfig {
            pretrain_epochs: 1,
            adversarial_epochs: 1,
            batch_size: 16,
            validation_samples: 4,
            seed: 3,
            ..TrainConfig::default()
        },
        ..RunConfig::default()
    };
    cfg.assets.word_skipgram = sg.clone();
    cfg.assets.syllable_skipgram = SkipGramConfig { seed: 1, ..sg };
    cfg
}

/// A toy corpus on disk and a briefly trained checkpoint saved as `checkpoints/latest.json`.
pub fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let corpus = toy_corpus(&ToyCorpusConfig::two_regimes(50, 5)).unwrap();
    let corpus_path = dir.path().join("corpus.jsonl");
    write_corpus(&corpus_path, &corpus).unwrap();
    let cfg = small_run(&corpus_path, &dir.path().join("run"));
    let (model, split) = prepare_run(&cfg).unwrap();
    let mut trainer = Trainer::new(model, cfg.train.clone()).unwrap();
    let train = TrainingData::prepare(&split.train, &trainer.model.assets).unwrap();
    trainer.run(&train, None, &RunOutputs::default()).unwrap();
    let checkpoint = trainer.checkpoint();
    checkpoint.save(dir.path().join("checkpoints/latest.json")).unwrap();
    Fixture { dir, corpus, checkpoint }
}
