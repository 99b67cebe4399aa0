//! A laptop-scale run on the synthetic two-regime corpus: cross-entropy
//! pretraining, adversarial training, then a pitch-average sweep.
//!
//! `cargo run --release --example desk_run`

use std::time::Instant;

use conl2m::eval::controllability_sweep;
use conl2m::melody::split_dataset;
use conl2m::melody::toy::{toy_corpus, ToyCorpusConfig};
use conl2m::model::{AssetOptions, Model, ModelAssets};
use conl2m::style::StyleKey;
use conl2m::train::{TrainConfig, Trainer, TrainingData};

const SEED: u64 = 7;

fn main() -> conl2m::Result<()> {
    let start = Instant::now();
    let corpus = toy_corpus(&ToyCorpusConfig::two_regimes(600, SEED))?;
    let split = split_dataset(&corpus, (8, 1, 1), SEED)?;
    let assets = ModelAssets::fit(&corpus, &split.train, &AssetOptions::default())?;
    let config = assets.standard_config();
    let model = Model::init(&config, assets, SEED)?;
    let train = TrainingData::prepare(&split.train, &model.assets)?;
    let val = TrainingData::prepare(&split.valid, &model.assets)?;
    let mut trainer = Trainer::new(model, TrainConfig::desk(SEED))?;
    while !trainer.is_finished() {
        let r = trainer.run_epoch(&train, Some(&val))?;
        println!("{:>6.1}s {}", start.elapsed().as_secs_f64(), serde_json::to_string(&r)?);
    }
    let sweep = controllability_sweep(
        &trainer.model,
        &split.test,
        StyleKey::parse("pitch.avg").expect("valid key"),
        &[0.2, 0.4, 0.6, 0.8],
        0.5,
        SEED,
    )?;
    println!("{}", serde_json::to_string_pretty(&sweep)?);
    println!("total {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
