mod common;

use common::*;
use conl2m::eval::controllability_sweep;
use conl2m::melody::split_dataset;
use conl2m::model::Checkpoint;
use conl2m::style::StyleKey;
use conl2m::train::{LossMode, Phase, RunOutputs, TrainConfig, Trainer, TrainingData};

/// One sample repeated 64 times, published layer sizes, 4 updates per epoch.
#[test]
fn a_single_sample_is_memorized() {
    let setup = toy_setup(40, 2, false).unwrap();
    let one = TrainingData {
        samples: vec![setup.train.samples[0].clone(); 64],
    };
    let cfg = TrainConfig {
        pretrain_epochs: 50,
        adversarial_epochs: 0,
        batch_size: 16,
        pretrain_learning_rate: 4e-3,
        validation_samples: 0,
        seed: 2,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(setup.model, cfg).unwrap();
    trainer.run(&one, None, &RunOutputs::default()).unwrap();
    let ce: Vec<f64> = trainer.state.history.iter().map(|r| r.ce.unwrap()).collect();
    let decreasing = ce.windows(2).filter(|w| w[1] < w[0]).count();
    assert!(decreasing as f64 >= 0.9 * (ce.len() - 1) as f64, "{ce:?}");
    assert!(ce[ce.len() - 1] < 0.1 * ce[0], "{ce:?}");
}

#[test]
fn adversarial_epochs_stay_finite() {
    let setup = toy_setup(60, 4, true).unwrap();
    for mode in LossMode::ALL {
        let cfg = TrainConfig {
            loss_mode: mode,
            ..quick_config(4)
        };
        let mut trainer = Trainer::new(setup.model.clone(), cfg).unwrap();
        trainer.run(&setup.train, Some(&setup.valid), &RunOutputs::default()).unwrap();
        let adv: Vec<_> = trainer.state.history.iter().filter(|r| r.phase == Phase::Adversarial).collect();
        assert_eq!(adv.len(), 2);
        for r in adv {
            let l = r.adversarial.as_ref().unwrap();
            assert!(l.g_loss.is_finite() && l.d_loss.is_finite(), "{mode:?}: {l:?}");
            assert_eq!(l.ce.is_some(), mode == LossMode::RsganCe);
        }
        assert!(trainer.model.generator.store.all_finite());
        assert!(trainer.model.discriminator.store.all_finite());
    }
}

#[test]
fn resuming_matches_an_uninterrupted_run() {
    let setup = toy_setup(60, 6, true).unwrap();
    let cfg = quick_config(6);
    let mut full = Trainer::new(setup.model.clone(), cfg.clone()).unwrap();
    full.run(&setup.train, Some(&setup.valid), &RunOutputs::default()).unwrap();

    for stop in 1..cfg.total_epochs() {
        let mut first = Trainer::new(setup.model.clone(), cfg.clone()).unwrap();
        for _ in 0..stop {
            first.run_epoch(&setup.train, Some(&setup.valid)).unwrap();
        }
        let bytes = first.checkpoint().to_bytes().unwrap();
        let mut second = Trainer::resume(Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        second.run(&setup.train, Some(&setup.valid), &RunOutputs::default()).unwrap();
        assert_eq!(
            second.checkpoint().to_bytes().unwrap(),
            full.checkpoint().to_bytes().unwrap(),
            "resumed after epoch {stop}"
        );
    }
}

#[test]
fn run_writes_log_lines_and_checkpoints() {
    let setup = toy_setup(40, 8, true).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = RunOutputs {
        log: Some(dir.path().join("log/train.jsonl")),
        checkpoint_dir: Some(dir.path().join("ckpt")),
    };
    let cfg = TrainConfig {
        checkpoint_every: 3,
        ..quick_config(8)
    };
    let mut trainer = Trainer::new(setup.model, cfg).unwrap();
    trainer.run(&setup.train, Some(&setup.valid), &out).unwrap();
    let log = std::fs::read_to_string(dir.path().join("log/train.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[3]["epoch"], 4);
    assert!(lines[3]["adversarial"]["temperature"].as_f64().unwrap() > 1.0);
    for name in ["epoch-0003.json", "epoch-0004.json", "latest.json"] {
        assert!(dir.path().join("ckpt").join(name).exists(), "{name}");
    }
    let latest = Checkpoint::load(dir.path().join("ckpt/latest.json")).unwrap();
    assert_eq!(latest.content_hash().unwrap(), trainer.checkpoint().content_hash().unwrap());
    assert!(Trainer::resume(latest).unwrap().is_finished());
}

#[test]
fn training_config_files_reject_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(&good, r#"{"batch_size": 8, "loss_mode": "rsgan_ce"}"#).unwrap();
    let cfg = TrainConfig::load(&good).unwrap();
    assert_eq!((cfg.batch_size, cfg.loss_mode, cfg.pretrain_epochs), (8, LossMode::RsganCe, 40));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"batch_sise": 8}"#).unwrap();
    assert!(TrainConfig::load(&bad).is_err());
}

#[test]
fn sweeps_and_splits_are_deterministic() {
    let setup = toy_setup(60, 9, true).unwrap();
    let again = split_dataset(&setup.corpus, (8, 1, 1), 9).unwrap();
    assert_eq!(serde_json::to_vec(&again).unwrap(), serde_json::to_vec(&setup.split).unwrap());
    let key = StyleKey::parse("duration.var").unwrap();
    let run = || controllability_sweep(&setup.model, &setup.split.test, key, &[0.1, 0.5, 0.9], 0.5, 3).unwrap();
    assert_eq!(serde_json::to_string(&run()).unwrap(), serde_json::to_string(&run()).unwrap());
}
