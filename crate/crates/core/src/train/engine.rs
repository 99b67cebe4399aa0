//! Cross-entropy pretraining, the adversarial phase and the run driver.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::losses::{relativistic_loss_graph, seqloss_graph};
use super::sampler::{gumbel_noise, gumbel_softmax_graph, temperature_schedule, TemperatureConvention};
use crate::attr::{Attribute, PerAttr};
use crate::error::{Error, Result};
use crate::eval::{self_bleu, style_mse};
use crate::melody::{MelodySequence, PairedSample};
use crate::model::{Checkpoint, DecodeStrategy, GenerationInput, Model, ModelAssets};
use crate::net::{
    clip_global_norm, rollout_graph, score_graph, AdamConfig, AdamState, BoundParams, GenVars, InitialTokenPolicy,
    ModelConfig, ParamStore,
};
use crate::rng::stream_rng;
use crate::style::{index_stats, IndexStats};
use crate::tape::{Graph, Var};

/// Which generator objective the adversarial phase optimizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    Rsgan,
    /// RSGAN plus teacher-forced cross-entropy.
    RsganCe,
    /// RSGAN plus the per-attribute sequence-statistics loss.
    #[default]
    RsganSeq,
}

impl LossMode {
    pub const ALL: [LossMode; 3] = [LossMode::Rsgan, LossMode::RsganCe, LossMode::RsganSeq];

    pub fn name(self) -> &'static str {
        match self {
            LossMode::Rsgan => "rsgan",
            LossMode::RsganCe => "rsgan_ce",
            LossMode::RsganSeq => "rsgan_seq",
        }
    }
}

/// Training hyperparameters; every key may be omitted from a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub pretrain_epochs: usize,
    pub adversarial_epochs: usize,
    pub batch_size: usize,
    pub pretrain_learning_rate: f64,
    pub generator_learning_rate: f64,
    pub discriminator_learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub grad_clip: f64,
    pub gumbel_max_temperature: f64,
    pub temperature_convention: TemperatureConvention,
    /// Weight of the mean term of the sequence-statistics loss.
    pub seqloss_alpha1: f64,
    /// Weight of the variance term of the sequence-statistics loss.
    pub seqloss_alpha2: f64,
    pub loss_mode: LossMode,
    /// Weight of the cross-entropy term under [`LossMode::RsganCe`].
    pub ce_weight: f64,
    pub seed: u64,
    /// Save a checkpoint every this many epochs; 0 saves only the last.
    pub checkpoint_every: usize,
    /// Validation sequences generated per epoch for Self-BLEU and style MSE; 0 disables validation.
    pub validation_samples: usize,
    pub self_bleu_max_n: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            pretrain_epochs: 40,
            adversarial_epochs: 120,
            batch_size: 512,
            pretrain_learning_rate: 1e-3,
            generator_learning_rate: 1e-4,
            discriminator_learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.99,
            grad_clip: 5.0,
            gumbel_max_temperature: 1000.0,
            temperature_convention: TemperatureConvention::Divide,
            seqloss_alpha1: 1.0,
            seqloss_alpha2: 1.0,
            loss_mode: LossMode::RsganSeq,
            ce_weight: 1.0,
            seed: 0,
            checkpoint_every: 10,
            validation_samples: 256,
            self_bleu_max_n: 4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size as f64),
            ("pretrain_learning_rate", self.pretrain_learning_rate),
            ("generator_learning_rate", self.generator_learning_rate),
            ("discriminator_learning_rate", self.discriminator_learning_rate),
            ("grad_clip", self.grad_clip),
            ("self_bleu_max_n", self.self_bleu_max_n as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.gumbel_max_temperature >= 1.0 && self.gumbel_max_temperature.is_finite()) {
            return Err(Error::InvalidConfig("gumbel_max_temperature must be at least 1".into()));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1)")));
            }
        }
        for (name, v) in [
            ("seqloss_alpha1", self.seqloss_alpha1),
            ("seqloss_alpha2", self.seqloss_alpha2),
            ("ce_weight", self.ce_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }

    /// Laptop-scale schedule for the toy corpus: 10 CE and 20 adversarial
    /// epochs, batch 16, pretraining learning rate 4e-3.
    pub fn desk(seed: u64) -> Self {
        TrainConfig {
            pretrain_epochs: 10,
            adversarial_epochs: 20,
            batch_size: 16,
            pretrain_learning_rate: 4e-3,
            validation_samples: 32,
            seed,
            ..TrainConfig::default()
        }
    }

    pub fn total_epochs(&self) -> usize {
        self.pretrain_epochs + self.adversarial_epochs
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: TrainConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn adam(&self, learning_rate: f64) -> AdamConfig {
        AdamConfig {
            learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::with_lr(learning_rate)
        }
    }

    fn uses_seqloss(&self) -> bool {
        self.loss_mode == LossMode::RsganSeq && (self.seqloss_alpha1 != 0.0 || self.seqloss_alpha2 != 0.0)
    }
}

/// One training sequence in model-ready form.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSample {
    pub id: String,
    /// `T × lyric_dim`.
    pub lyrics: Array2<f64>,
    pub tokens: PerAttr<Vec<usize>>,
    pub rse: PerAttr<Vec<f64>>,
    pub stats: PerAttr<IndexStats>,
    pub melody: MelodySequence,
}

/// A batch laid out time-major: every `Vec` is indexed by step.
#[derive(Clone, Debug)]
pub struct Batch {
    pub lyrics: Vec<Array2<f64>>,
    /// `batch × K` one-hots of the ground-truth tokens.
    pub targets: PerAttr<Vec<Array2<f64>>>,
    pub rse: PerAttr<Array2<f64>>,
    /// All branches' style embeddings side by side, as the discriminator reads them.
    pub rse_concat: Array2<f64>,
    pub stats: PerAttr<Vec<IndexStats>>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.lyrics.first().map_or(0, |m| m.nrows())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingData {
    pub samples: Vec<EncodedSample>,
}

impl TrainingData {
    pub fn prepare(samples: &[PairedSample], assets: &ModelAssets) -> Result<Self> {
        let samples = samples
            .iter()
            .map(|s| {
                let tokens = assets.vocab.encode(&s.melody)?;
                let stats = tokens.try_map(|_, t| index_stats(t))?;
                Ok(EncodedSample {
                    id: s.id.clone(),
                    lyrics: assets.embed(&s.lyrics),
                    tokens,
                    rse: assets.reference_rse(&s.style),
                    stats,
                    melody: s.melody.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainingData { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Shuffled batches of equal-length sequences for one epoch.
    ///
    /// With a single sequence length this is `ceil(n / batch_size)` batches.
    pub fn batches(&self, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
        let mut rng = stream_rng(seed, "batches", epoch as u64);
        let mut order: Vec<usize> = (0..self.samples.len()).collect();
        order.shuffle(&mut rng);
        let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in order {
            by_len.entry(self.samples[i].lyrics.nrows()).or_default().push(i);
        }
        let mut batches: Vec<Vec<usize>> = by_len
            .values()
            .flat_map(|idx| idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec))
            .collect();
        batches.shuffle(&mut rng);
        batches
    }

    pub fn assemble(&self, idx: &[usize], config: &ModelConfig) -> Batch {
        let rows: Vec<&EncodedSample> = idx.iter().map(|&i| &self.samples[i]).collect();
        let n = rows.len();
        let len = rows[0].lyrics.nrows();
        let lyrics = (0..len)
            .map(|t| Array2::from_shape_fn((n, config.lyric_dim), |(b, j)| rows[b].lyrics[[t, j]]))
            .collect();
        let targets = PerAttr::from_fn(|a| {
            let k = config.branches[a].output_dim;
            (0..len)
                .map(|t| {
                    let mut m = Array2::zeros((n, k));
                    for (b, s) in rows.iter().enumerate() {
                        m[[b, s.tokens[a][t]]] = 1.0;
                    }
                    m
                })
                .collect()
        });
        let rse = PerAttr::from_fn(|a| {
            Array2::from_shape_fn((n, config.rse_dims[a]), |(b, j)| rows[b].rse[a][j])
        });
        let parts: Vec<_> = Attribute::ALL.iter().map(|&a| rse[a].view()).collect();
        let rse_concat = ndarray::concatenate(ndarray::Axis(1), &parts).expect("equal row counts");
        let stats = PerAttr::from_fn(|a| rows.iter().map(|s| s.stats[a]).collect());
        Batch {
            lyrics,
            targets,
            rse,
            rse_concat,
            stats,
        }
    }
}

struct BatchVars {
    lyrics: Vec<Var>,
    rse: PerAttr<Option<Var>>,
    rse_concat: Option<Var>,
}

fn batch_vars(g: &mut Graph, config: &ModelConfig, b: &Batch) -> BatchVars {
    BatchVars {
        lyrics: b.lyrics.iter().map(|x| g.constant(x.clone())).collect(),
        rse: PerAttr::from_fn(|a| (config.rse_dims[a] > 0).then(|| g.constant(b.rse[a].clone()))),
        rse_concat: config.uses_rse().then(|| g.constant(b.rse_concat.clone())),
    }
}

/// Teacher-forced cross-entropy: per attribute, the mean over steps of the
/// batch-mean token cross-entropy; summed over attributes.
fn ce_graph(g: &mut Graph, v: &GenVars, config: &ModelConfig, b: &Batch, bv: &BatchVars) -> Result<Var> {
    let rv = rollout_graph(g, v, config, &bv.lyrics, &bv.rse, &InitialTokenPolicy::LearnedStart, |g, a, t, _| {
        Ok(g.constant(b.targets[a][t].clone()))
    })?;
    let steps = bv.lyrics.len() as f64;
    let mut total: Option<Var> = None;
    for a in Attribute::ALL {
        for (t, &logits) in rv.logits[a].iter().enumerate() {
            let ce = g.cross_entropy(logits, b.targets[a][t].clone());
            let ce = g.scale(ce, 1.0 / steps);
            total = Some(match total {
                Some(acc) => g.add(acc, ce),
                None => ce,
            });
        }
    }
    Ok(total.expect("at least one step"))
}

fn checked_value(g: &Graph, v: Var, what: &str, epoch: usize, batch: usize) -> Result<f64> {
    let x = g.scalar(v);
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(format!("{what} at epoch {epoch}, batch {batch}")))
    }
}

/// Backward pass, finiteness guard, clipping and one Adam update.
#[allow(clippy::too_many_arguments)]
fn apply_update(
    g: &Graph,
    loss: Var,
    bound: &BoundParams,
    store: &mut ParamStore,
    opt: &mut AdamState,
    adam: &AdamConfig,
    clip: f64,
    what: &str,
) -> Result<()> {
    let grads = g.backward(loss);
    let mut grads = bound.gradients(store, &grads);
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NonFinite(format!("{what} gradient of {name}")));
    }
    clip_global_norm(&mut grads, clip);
    opt.update(store, &grads, adam);
    if let Some(name) = store.first_non_finite() {
        return Err(Error::NonFinite(format!("{what} parameter {name}")));
    }
    Ok(())
}

/// One teacher-forced cross-entropy epoch; returns the sample-weighted mean loss.
pub fn ce_pretrain_epoch(
    model: &mut Model,
    opt: &mut AdamState,
    data: &TrainingData,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let adam = cfg.adam(cfg.pretrain_learning_rate);
    let config = model.config().clone();
    let mut total = 0.0;
    for (bi, idx) in data.batches(cfg.batch_size, cfg.seed, epoch).iter().enumerate() {
        let b = data.assemble(idx, &config);
        let mut g = Graph::new();
        let (bound, gv) = model.generator.bind(&mut g);
        let bv = batch_vars(&mut g, &config, &b);
        let loss = ce_graph(&mut g, &gv, &config, &b, &bv)?;
        total += checked_value(&g, loss, "cross-entropy", epoch, bi)? * idx.len() as f64;
        apply_update(&g, loss, &bound, &mut model.generator.store, opt, &adam, cfg.grad_clip, "generator")?;
    }
    Ok(total / data.len() as f64)
}

/// Sample-weighted mean losses of one adversarial epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarialLosses {
    pub temperature: f64,
    pub g_loss: f64,
    pub d_loss: f64,
    /// Per-attribute sequence-statistics loss; zero when that term is off.
    pub seq_loss: PerAttr<f64>,
    /// Teacher-forced cross-entropy under [`LossMode::RsganCe`].
    pub ce: Option<f64>,
}

/// One adversarial epoch. `adversarial_epoch` counts from 0 within the phase
/// and sets the temperature; `global_epoch` keys the noise and batch streams.
///
/// Per batch: a generator step on the relativistic loss (plus the configured
/// auxiliary term) through straight-through Gumbel samples, then one
/// discriminator step on the same real batch against the hard samples.
pub fn adversarial_epoch(
    model: &mut Model,
    gen_opt: &mut AdamState,
    disc_opt: &mut AdamState,
    data: &TrainingData,
    cfg: &TrainConfig,
    adversarial_epoch: usize,
    global_epoch: usize,
) -> Result<AdversarialLosses> {
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let tau = temperature_schedule(adversarial_epoch, cfg.adversarial_epochs, cfg.gumbel_max_temperature);
    let g_adam = cfg.adam(cfg.generator_learning_rate);
    let d_adam = cfg.adam(cfg.discriminator_learning_rate);
    let config = model.config().clone();
    let mut noise_rng = stream_rng(cfg.seed, "gumbel", global_epoch as u64);
    let mut out = AdversarialLosses {
        temperature: tau,
        g_loss: 0.0,
        d_loss: 0.0,
        seq_loss: PerAttr::new(0.0, 0.0, 0.0),
        ce: (cfg.loss_mode == LossMode::RsganCe).then_some(0.0),
    };
    for (bi, idx) in data.batches(cfg.batch_size, cfg.seed, global_epoch).iter().enumerate() {
        let b = data.assemble(idx, &config);
        let w = idx.len() as f64;

        let mut g = Graph::new();
        let (bound, gv) = model.generator.bind(&mut g);
        let dv = model.discriminator.bind_frozen(&mut g);
        let bv = batch_vars(&mut g, &config, &b);
        let mut hard: PerAttr<Vec<Array2<f64>>> = PerAttr::default();
        let rv = rollout_graph(&mut g, &gv, &config, &bv.lyrics, &bv.rse, &InitialTokenPolicy::LearnedStart, |g, a, _, logits| {
            let noise = gumbel_noise(g.shape(logits), &mut noise_rng);
            let (_, st) = gumbel_softmax_graph(g, logits, noise, tau, cfg.temperature_convention);
            hard[a].push(g.value(st).clone());
            Ok(st)
        })?;
        let real_tokens = b.targets.map(|_, steps| steps.iter().map(|m| g.constant(m.clone())).collect::<Vec<_>>());
        let fake_score = score_graph(&mut g, &dv, &config, &rv.tokens, &bv.lyrics, bv.rse_concat);
        let real_score = score_graph(&mut g, &dv, &config, &real_tokens, &bv.lyrics, bv.rse_concat);
        let mut loss = relativistic_loss_graph(&mut g, fake_score, real_score);
        out.g_loss += checked_value(&g, loss, "generator loss", global_epoch, bi)? * w;
        if cfg.uses_seqloss() && bv.lyrics.len() >= 2 {
            for a in Attribute::ALL {
                let sl = seqloss_graph(&mut g, &rv.tokens[a], &b.stats[a], cfg.seqloss_alpha1, cfg.seqloss_alpha2)?;
                out.seq_loss[a] += checked_value(&g, sl, "sequence loss", global_epoch, bi)? * w;
                loss = g.add(loss, sl);
            }
        }
        if cfg.loss_mode == LossMode::RsganCe {
            let ce = ce_graph(&mut g, &gv, &config, &b, &bv)?;
            let ce_val = checked_value(&g, ce, "cross-entropy", global_epoch, bi)?;
            *out.ce.as_mut().expect("ce slot") += ce_val * w;
            let ce = g.scale(ce, cfg.ce_weight);
            loss = g.add(loss, ce);
        }
        apply_update(&g, loss, &bound, &mut model.generator.store, gen_opt, &g_adam, cfg.grad_clip, "generator")?;

        let mut g = Graph::new();
        let (bound, dv) = model.discriminator.bind(&mut g);
        let bv = batch_vars(&mut g, &config, &b);
        let fake_tokens = hard.map(|_, steps| steps.iter().map(|m| g.constant(m.clone())).collect::<Vec<_>>());
        let real_tokens = b.targets.map(|_, steps| steps.iter().map(|m| g.constant(m.clone())).collect::<Vec<_>>());
        let fake_score = score_graph(&mut g, &dv, &config, &fake_tokens, &bv.lyrics, bv.rse_concat);
        let real_score = score_graph(&mut g, &dv, &config, &real_tokens, &bv.lyrics, bv.rse_concat);
        let d_loss = relativistic_loss_graph(&mut g, real_score, fake_score);
        out.d_loss += checked_value(&g, d_loss, "discriminator loss", global_epoch, bi)? * w;
        apply_update(&g, d_loss, &bound, &mut model.discriminator.store, disc_opt, &d_adam, cfg.grad_clip, "discriminator")?;
    }
    let n = data.len() as f64;
    out.g_loss /= n;
    out.d_loss /= n;
    out.seq_loss = out.seq_loss.map(|_, &x| x / n);
    out.ce = out.ce.map(|x| x / n);
    Ok(out)
}

/// Validation Self-BLEU (combined triplet tokens) and style MSE against the references.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub samples: usize,
    pub self_bleu: Vec<f64>,
    pub style_mse: [f64; 9],
}

/// Generates for the first `cfg.validation_samples` sequences of `val`,
/// conditioned on their reference style.
pub fn validate(model: &Model, val: &TrainingData, cfg: &TrainConfig, epoch: usize) -> Result<Option<ValidationRecord>> {
    let n = cfg.validation_samples.min(val.len());
    if n < 2 {
        return Ok(None);
    }
    let subset = &val.samples[..n];
    let inputs: Vec<GenerationInput> = subset
        .iter()
        .map(|s| GenerationInput {
            lyrics: s.lyrics.clone(),
            rse: s.rse.clone(),
        })
        .collect();
    let seed: u64 = stream_rng(cfg.seed, "validation", epoch as u64).random();
    let gens = model.generate_batch(&inputs, DecodeStrategy::Sample, seed)?;
    let triplets: Vec<Vec<(usize, usize, usize)>> = gens
        .iter()
        .map(|gen| {
            let t = &gen.tokens;
            (0..t[Attribute::Pitch].len())
                .map(|i| (t[Attribute::Pitch][i], t[Attribute::Duration][i], t[Attribute::Rest][i]))
                .collect()
        })
        .collect();
    let self_bleu = self_bleu(&triplets, cfg.self_bleu_max_n)?;
    let generated: Vec<MelodySequence> = gens.into_iter().map(|g| g.melody).collect();
    let reference: Vec<MelodySequence> = subset.iter().map(|s| s.melody.clone()).collect();
    let style_mse = style_mse(&generated, &reference)?;
    Ok(Some(ValidationRecord {
        samples: n,
        self_bleu,
        style_mse,
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Adversarial,
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based over the whole run.
    pub epoch: usize,
    pub phase: Phase,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ce: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub adversarial: Option<AdversarialLosses>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub validation: Option<ValidationRecord>,
}

/// Everything needed to continue a run besides the model and config. Random
/// streams are keyed by epoch, so no generator state is stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    pub pretrain_opt: AdamState,
    pub generator_opt: AdamState,
    pub discriminator_opt: AdamState,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    pub fn new(model: &Model) -> Self {
        TrainState {
            epoch: 0,
            pretrain_opt: AdamState::new(&model.generator.store),
            generator_opt: AdamState::new(&model.generator.store),
            discriminator_opt: AdamState::new(&model.discriminator.store),
            history: Vec::new(),
        }
    }
}

/// Where a run writes its log and checkpoints.
#[derive(Clone, Debug, Default)]
pub struct RunOutputs {
    /// Line-delimited JSON epoch records, appended.
    pub log: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model,
    pub state: TrainState,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let state = TrainState::new(&model);
        Ok(Trainer { config, model, state })
    }

    /// Continues the run stored in a checkpoint.
    pub fn resume(ckpt: Checkpoint) -> Result<Self> {
        let (Some(config), Some(state)) = (ckpt.train_config, ckpt.train_state) else {
            return Err(Error::InvalidConfig("checkpoint carries no training state".into()));
        };
        config.validate()?;
        Ok(Trainer {
            config,
            model: ckpt.model,
            state,
        })
    }

    pub fn is_finished(&self) -> bool {
        self.state.epoch >= self.config.total_epochs()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.model.clone(), Some(self.config.clone()), Some(self.state.clone()))
    }

    /// Runs the next epoch and appends its record to the history.
    pub fn run_epoch(&mut self, train: &TrainingData, val: Option<&TrainingData>) -> Result<EpochRecord> {
        if self.is_finished() {
            return Err(Error::InvalidConfig("training already finished".into()));
        }
        let e = self.state.epoch;
        let mut record = if e < self.config.pretrain_epochs {
            let ce = ce_pretrain_epoch(&mut self.model, &mut self.state.pretrain_opt, train, &self.config, e)?;
            EpochRecord {
                epoch: e + 1,
                phase: Phase::Pretrain,
                ce: Some(ce),
                adversarial: None,
                validation: None,
            }
        } else {
            let losses = adversarial_epoch(
                &mut self.model,
                &mut self.state.generator_opt,
                &mut self.state.discriminator_opt,
                train,
                &self.config,
                e - self.config.pretrain_epochs,
                e,
            )?;
            EpochRecord {
                epoch: e + 1,
                phase: Phase::Adversarial,
                ce: None,
                adversarial: Some(losses),
                validation: None,
            }
        };
        if let Some(val) = val {
            record.validation = validate(&self.model, val, &self.config, e)?;
        }
        self.state.epoch += 1;
        self.state.history.push(record.clone());
        Ok(record)
    }

    /// Runs to completion, appending log lines and writing checkpoints.
    ///
    /// A non-finite loss aborts the run; the last finite state is saved as
    /// `diverged.json` next to the checkpoints.
    pub fn run(&mut self, train: &TrainingData, val: Option<&TrainingData>, out: &RunOutputs) -> Result<()> {
        self.run_with(train, val, out, |_| {})
    }

    /// [`Trainer::run`] that also hands every finished epoch record to `on_epoch`.
    pub fn run_with(
        &mut self,
        train: &TrainingData,
        val: Option<&TrainingData>,
        out: &RunOutputs,
        mut on_epoch: impl FnMut(&EpochRecord),
    ) -> Result<()> {
        while !self.is_finished() {
            let record = match self.run_epoch(train, val) {
                Ok(r) => r,
                Err(err) => {
                    if let (Error::NonFinite(_), Some(dir)) = (&err, &out.checkpoint_dir) {
                        self.checkpoint().save(dir.join("diverged.json"))?;
                    }
                    return Err(err);
                }
            };
            log::info!("epoch {} {:?} done", record.epoch, record.phase);
            on_epoch(&record);
            if let Some(path) = &out.log {
                append_line(path, &serde_json::to_string(&record)?)?;
            }
            if let Some(dir) = &out.checkpoint_dir {
                let every = self.config.checkpoint_every;
                let due = every > 0 && record.epoch % every == 0;
                if due || self.is_finished() {
                    let ckpt = self.checkpoint();
                    ckpt.save(dir.join(format!("epoch-{:04}.json", record.epoch)))?;
                    ckpt.save(dir.join("latest.json"))?;
                }
            }
        }
        Ok(())
    }
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

/// Training history of one loss mode in an ablation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub mode: LossMode,
    pub history: Vec<EpochRecord>,
}

impl AblationRun {
    /// `(epoch, Self-BLEU-n)` points of the validation curve, for `n` in `1..=max_n`.
    pub fn self_bleu_curve(&self, n: usize) -> Vec<(usize, f64)> {
        self.history
            .iter()
            .filter_map(|r| {
                let v = r.validation.as_ref()?;
                Some((r.epoch, *v.self_bleu.get(n.checked_sub(1)?)?))
            })
            .collect()
    }
}

/// Trains one copy of `base` per loss mode under otherwise identical settings.
pub fn run_loss_ablation(
    base: &Model,
    cfg: &TrainConfig,
    modes: &[LossMode],
    train: &TrainingData,
    val: &TrainingData,
) -> Result<Vec<AblationRun>> {
    modes
        .iter()
        .map(|&mode| {
            let mut c = cfg.clone();
            c.loss_mode = mode;
            let mut t = Trainer::new(base.clone(), c)?;
            t.run(train, Some(val), &RunOutputs::default())?;
            Ok(AblationRun {
                mode,
                history: t.state.history,
            })
        })
        .collect()
}
