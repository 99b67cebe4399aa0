//! A trained model bundle (networks plus every manifest needed to use them),
//! its checkpoint container, and controllable generation.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attr::{Attribute, PerAttr};
use crate::error::{Error, Result};
use crate::lyrics::{
    embed_lyrics, token_streams, tokenize_lyrics, train_skipgram, EmbeddingTable, LyricsSequence, SkipGramConfig,
    TokenLevel, TokenNormalization,
};
use crate::melody::{MelodySequence, PairedSample, VocabManifest};
use crate::net::{generator_rollout, init_params, DiscriminatorParams, InitialTokenPolicy, MemofuParams, ModelConfig, Sampler};
use crate::rng::stream_rng;
use crate::style::{
    control_to_rse, extract_style_features, fit_discretizers, DiscretizerSet, StyleControls, StyleFeatures,
};
use crate::train::{TrainConfig, TrainState};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything besides the weights that maps raw inputs to model inputs and back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelAssets {
    pub vocab: VocabManifest,
    /// `None` trains and generates without style conditioning.
    pub discretizers: Option<DiscretizerSet>,
    pub word_table: EmbeddingTable,
    pub syllable_table: EmbeddingTable,
    pub normalization: TokenNormalization,
}

/// How [`ModelAssets::fit`] builds vocabularies, lyric tables and discretizers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssetOptions {
    pub word_skipgram: SkipGramConfig,
    pub syllable_skipgram: SkipGramConfig,
    pub normalization: TokenNormalization,
    /// Fit style discretizers; without them the model is unconditioned.
    pub use_rse: bool,
    /// Requested pitch class count; the observed range is widened to it when smaller.
    pub pitch_classes: Option<usize>,
}

impl Default for AssetOptions {
    fn default() -> Self {
        AssetOptions {
            word_skipgram: SkipGramConfig::default(),
            syllable_skipgram: SkipGramConfig {
                seed: 1,
                ..SkipGramConfig::default()
            },
            normalization: TokenNormalization::default(),
            use_rse: true,
            pitch_classes: Some(70),
        }
    }
}

impl ModelAssets {
    /// Vocabulary over `corpus` (every split, so no split holds unseen values);
    /// lyric tables and discretizers over `train` only.
    pub fn fit(corpus: &[PairedSample], train: &[PairedSample], opts: &AssetOptions) -> Result<Self> {
        let lyrics: Vec<LyricsSequence> = train.iter().map(|s| s.lyrics.normalized(&opts.normalization)).collect();
        let word_table = train_skipgram(&token_streams(&lyrics, TokenLevel::Word), &opts.word_skipgram)?;
        let syllable_table = train_skipgram(&token_streams(&lyrics, TokenLevel::Syllable), &opts.syllable_skipgram)?;
        Self::with_tables(corpus, train, opts, word_table, syllable_table)
    }

    /// [`ModelAssets::fit`] with lyric tables trained elsewhere; the skip-gram
    /// options in `opts` are ignored.
    pub fn with_tables(
        corpus: &[PairedSample],
        train: &[PairedSample],
        opts: &AssetOptions,
        word_table: EmbeddingTable,
        syllable_table: EmbeddingTable,
    ) -> Result<Self> {
        let vocab = VocabManifest::from_melodies(corpus.iter().map(|s| &s.melody), opts.pitch_classes)?;
        let discretizers = if opts.use_rse { Some(fit_discretizers(train)?) } else { None };
        Ok(ModelAssets {
            vocab,
            discretizers,
            word_table,
            syllable_table,
            normalization: opts.normalization,
        })
    }

    pub fn lyric_dim(&self) -> usize {
        self.word_table.dim() + self.syllable_table.dim()
    }

    pub fn rse_dims(&self) -> PerAttr<usize> {
        match &self.discretizers {
            Some(d) => d.dims(),
            None => PerAttr::new(0, 0, 0),
        }
    }

    /// The published layer sizes fitted to these assets.
    pub fn standard_config(&self) -> ModelConfig {
        ModelConfig::standard(self.lyric_dim(), self.vocab.sizes(), self.rse_dims())
    }

    /// `T × lyric_dim` vectors of a syllable sequence.
    pub fn embed(&self, lyrics: &LyricsSequence) -> Array2<f64> {
        embed_lyrics(&lyrics.normalized(&self.normalization), &self.word_table, &self.syllable_table).vectors
    }

    /// Dense per-branch style embedding of a control setting; empty rows without style.
    pub fn control_rse(&self, controls: &StyleControls) -> Result<PerAttr<Vec<f64>>> {
        controls.validate()?;
        match &self.discretizers {
            Some(d) => {
                let rse = control_to_rse(controls, d)?;
                Ok(PerAttr::from_fn(|a| rse.dense(a)))
            }
            None => Ok(PerAttr::new(Vec::new(), Vec::new(), Vec::new())),
        }
    }

    /// Dense per-branch style embedding of a reference melody's own features.
    pub fn reference_rse(&self, style: &StyleFeatures) -> PerAttr<Vec<f64>> {
        match &self.discretizers {
            Some(d) => {
                let rse = crate::style::build_rse(style, d);
                PerAttr::from_fn(|a| rse.dense(a))
            }
            None => PerAttr::new(Vec::new(), Vec::new(), Vec::new()),
        }
    }
}

/// How generation picks each token from the branch logits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeStrategy {
    Greedy,
    /// A draw from softmax(logits).
    #[default]
    Sample,
}

/// One generated melody.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub melody: MelodySequence,
    /// Decoded class indices per attribute.
    pub tokens: PerAttr<Vec<usize>>,
    /// Style features of the output; absent for single-note melodies.
    pub features: Option<StyleFeatures>,
}

/// One generation input: a lyric sequence and its per-branch style embedding.
#[derive(Clone, Debug)]
pub struct GenerationInput {
    pub lyrics: Array2<f64>,
    pub rse: PerAttr<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub generator: MemofuParams,
    pub discriminator: DiscriminatorParams,
    pub assets: ModelAssets,
}

impl Model {
    /// Freshly initialized networks for `config`.
    pub fn init(config: &ModelConfig, assets: ModelAssets, seed: u64) -> Result<Self> {
        if config.lyric_dim != assets.lyric_dim() {
            return Err(Error::DimensionMismatch {
                what: "lyric width".into(),
                expected: assets.lyric_dim(),
                found: config.lyric_dim,
            });
        }
        if config.output_dims() != assets.vocab.sizes() || config.rse_dims != assets.rse_dims() {
            return Err(Error::InvalidConfig(
                "model widths disagree with the vocabulary or discretizers".into(),
            ));
        }
        let (generator, discriminator) = init_params(config, seed)?;
        Ok(Model {
            generator,
            discriminator,
            assets,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.generator.config
    }

    /// Generates one melody per input. Inputs of equal length are batched
    /// together in input order; the noise stream of each batch is keyed by
    /// `seed` and the batch's length, so results do not depend on which other
    /// lengths are present.
    pub fn generate_batch(&self, inputs: &[GenerationInput], strategy: DecodeStrategy, seed: u64) -> Result<Vec<Generation>> {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, inp) in inputs.iter().enumerate() {
            if inp.lyrics.nrows() == 0 {
                return Err(Error::EmptySequence);
            }
            groups.entry(inp.lyrics.nrows()).or_default().push(i);
        }
        let mut out: Vec<Option<Generation>> = vec![None; inputs.len()];
        for (&len, members) in &groups {
            let batch = members.len();
            let lyric_dim = self.config().lyric_dim;
            let lyrics: Vec<Array2<f64>> = (0..len)
                .map(|t| {
                    let mut m = Array2::zeros((batch, lyric_dim));
                    for (b, &i) in members.iter().enumerate() {
                        m.row_mut(b).assign(&inputs[i].lyrics.row(t));
                    }
                    m
                })
                .collect();
            let rse = PerAttr::from_fn(|a| {
                let w = self.config().rse_dims[a];
                let mut m = Array2::zeros((batch, w));
                for (b, &i) in members.iter().enumerate() {
                    if inputs[i].rse[a].len() == w {
                        m.row_mut(b).assign(&ndarray::ArrayView1::from(&inputs[i].rse[a]));
                    }
                }
                m
            });
            for &i in members {
                for a in Attribute::ALL {
                    let w = self.config().rse_dims[a];
                    if inputs[i].rse[a].len() != w {
                        return Err(Error::DimensionMismatch {
                            what: format!("{a} style embedding"),
                            expected: w,
                            found: inputs[i].rse[a].len(),
                        });
                    }
                }
            }
            let mut rng = stream_rng(seed, "generate", len as u64);
            let mut sampler = match strategy {
                DecodeStrategy::Greedy => Sampler::Greedy,
                DecodeStrategy::Sample => Sampler::Categorical(&mut rng),
            };
            let roll = generator_rollout(&self.generator, &lyrics, &rse, &mut sampler, &InitialTokenPolicy::LearnedStart)?;
            for (b, &i) in members.iter().enumerate() {
                let tokens = roll.tokens.map(|_, per_row| per_row[b].clone());
                let melody = MelodySequence::from_indices(&self.assets.vocab, &tokens);
                let features = extract_style_features(&melody).ok();
                out[i] = Some(Generation {
                    melody,
                    tokens,
                    features,
                });
            }
        }
        Ok(out.into_iter().map(|g| g.expect("every input belongs to a group")).collect())
    }

    /// Generates a melody for raw lyric text under the given controls.
    ///
    /// Syllables are separated by `-` inside words; the melody has one note per syllable.
    pub fn generate(&self, lyrics: &str, controls: &StyleControls, seed: u64) -> Result<(LyricsSequence, Generation)> {
        let seq = tokenize_lyrics(lyrics, &self.assets.normalization)?;
        let input = GenerationInput {
            lyrics: self.assets.embed(&seq),
            rse: self.assets.control_rse(controls)?,
        };
        let g = self.generate_batch(&[input], DecodeStrategy::Sample, seed)?;
        Ok((seq, g.into_iter().next().expect("one input")))
    }

    /// Generation inputs for test samples, conditioned on their own reference style.
    pub fn reference_inputs(&self, samples: &[PairedSample]) -> Vec<GenerationInput> {
        samples
            .iter()
            .map(|s| GenerationInput {
                lyrics: self.assets.embed(&s.lyrics),
                rse: self.assets.reference_rse(&s.style),
            })
            .collect()
    }
}

/// Versioned container of a model and, for resumable runs, its training state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub model: Model,
    #[serde(default)]
    pub train_config: Option<TrainConfig>,
    #[serde(default)]
    pub train_state: Option<TrainState>,
}

impl Checkpoint {
    pub fn new(model: Model, train_config: Option<TrainConfig>, train_state: Option<TrainState>) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config_hash: model.config().hash(),
            model,
            train_config,
            train_state,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn content_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_bytes()?)))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let h: Header = serde_json::from_slice(bytes)?;
        if h.version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion(h.version));
        }
        let c: Checkpoint = serde_json::from_slice(bytes)?;
        if c.config_hash != c.model.config().hash() {
            return Err(Error::InvalidConfig("checkpoint config hash does not match its model".into()));
        }
        if c.model.discriminator.config != *c.model.config() {
            return Err(Error::InvalidConfig("generator and discriminator configs differ".into()));
        }
        let (g0, d0) = init_params(c.model.config(), 0)?;
        c.model.generator.store.check_layout(&g0.store, "generator")?;
        c.model.discriminator.store.check_layout(&d0.store, "discriminator")?;
        if let Some(name) = c
            .model
            .generator
            .store
            .first_non_finite()
            .or_else(|| c.model.discriminator.store.first_non_finite())
        {
            return Err(Error::NonFinite(format!("checkpoint parameter {name}")));
        }
        Ok(c)
    }
}
