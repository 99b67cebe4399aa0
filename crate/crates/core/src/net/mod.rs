//! The three-branch fused-memory generator, the sequence discriminator and
//! their parameters.

mod disc;
mod memofu;
mod params;

pub use disc::{discriminator_score, discriminator_scores, score_graph, DiscVars, DiscriminatorParams};
pub use memofu::{
    generator_rollout, memofu_step, rollout_graph, step_graph, BranchState, GenVars, InitialTokenPolicy, MemofuParams,
    MemofuState, Rollout, RolloutVars, Sampler, StateVars,
};
pub use params::{clip_global_norm, glorot_uniform, orthogonal, AdamConfig, AdamState, BoundParams, ParamStore};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attr::{Attribute, PerAttr};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Widths of one generator branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchConfig {
    /// Previous-token embedding width.
    pub embed_dim: usize,
    /// Units of the fusion ("in") layer.
    pub hidden_dim: usize,
    /// Units of the independent output layer.
    pub lstm_units: usize,
    /// Number of classes of the branch's attribute.
    pub output_dim: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscConfig {
    pub embed_dims: PerAttr<usize>,
    /// Width of the dense per-step projection feeding the LSTM.
    pub hidden_dim: usize,
    pub lstm_units: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Width of the per-syllable lyric vector.
    pub lyric_dim: usize,
    pub branches: PerAttr<BranchConfig>,
    /// Style-embedding width per branch; all zero disables style conditioning.
    pub rse_dims: PerAttr<usize>,
    /// Feed cross-branch fusion-layer states into the gates as well as the candidate.
    #[serde(default)]
    pub fused_gates: bool,
    pub discriminator: DiscConfig,
}

impl ModelConfig {
    /// The published layer sizes with the given lyric, vocabulary and style widths.
    pub fn standard(lyric_dim: usize, output_dims: PerAttr<usize>, rse_dims: PerAttr<usize>) -> Self {
        let widths = PerAttr::new((128, 32, 64), (64, 16, 32), (32, 8, 16));
        ModelConfig {
            lyric_dim,
            branches: PerAttr::from_fn(|a| {
                let (embed_dim, hidden_dim, lstm_units) = widths[a];
                BranchConfig {
                    embed_dim,
                    hidden_dim,
                    lstm_units,
                    output_dim: output_dims[a],
                }
            }),
            rse_dims,
            fused_gates: false,
            discriminator: DiscConfig {
                embed_dims: PerAttr::new(128, 64, 32),
                hidden_dim: 32,
                lstm_units: 64,
            },
        }
    }

    pub fn uses_rse(&self) -> bool {
        self.rse_dims.iter().any(|(_, &d)| d > 0)
    }

    pub fn rse_total(&self) -> usize {
        self.rse_dims.iter().map(|(_, &d)| d).sum()
    }

    pub fn output_dims(&self) -> PerAttr<usize> {
        self.branches.map(|_, b| b.output_dim)
    }

    /// Input width of branch `a`'s fusion layer: lyric ∥ previous-token embedding ∥ style.
    pub fn branch_input_dim(&self, a: Attribute) -> usize {
        self.lyric_dim + self.branches[a].embed_dim + self.rse_dims[a]
    }

    pub fn disc_input_dim(&self) -> usize {
        let emb: usize = self.discriminator.embed_dims.iter().map(|(_, &d)| d).sum();
        emb + self.lyric_dim + self.rse_total()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("{what} must be positive")));
        if self.lyric_dim == 0 {
            return bad("lyric_dim");
        }
        for (a, b) in self.branches.iter() {
            if b.embed_dim == 0 || b.hidden_dim == 0 || b.lstm_units == 0 || b.output_dim == 0 {
                return bad(&format!("every {a} branch width"));
            }
        }
        let d = &self.discriminator;
        if d.hidden_dim == 0 || d.lstm_units == 0 || d.embed_dims.iter().any(|(_, &e)| e == 0) {
            return bad("every discriminator width");
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Deterministic initialization of both networks.
///
/// Recurrent matrices are orthogonal per gate block, input matrices
/// Glorot-uniform, biases zero except the forget gates at 1.0.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<(MemofuParams, DiscriminatorParams)> {
    config.validate()?;
    let mut rng = stream_rng(seed, "init-generator", 0);
    let gen = MemofuParams::init(config, &mut rng);
    let mut rng = stream_rng(seed, "init-discriminator", 0);
    let disc = DiscriminatorParams::init(config, &mut rng);
    Ok((gen, disc))
}

pub(crate) fn branch_prefix(a: Attribute) -> char {
    a.letter().to_ascii_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table2() -> ModelConfig {
        ModelConfig::standard(100, PerAttr::new(70, 10, 5), PerAttr::new(126, 38, 38))
    }

    #[test]
    fn standard_widths() {
        let c = table2();
        let p = c.branches[Attribute::Pitch];
        assert_eq!((p.embed_dim, p.hidden_dim, p.lstm_units, p.output_dim), (128, 32, 64, 70));
        let r = c.branches[Attribute::Rest];
        assert_eq!((r.embed_dim, r.hidden_dim, r.lstm_units, r.output_dim), (32, 8, 16, 5));
        assert_eq!(c.disc_input_dim(), 224 + 100 + 202);
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let c = table2();
        let (g1, d1) = init_params(&c, 3).unwrap();
        let (g2, d2) = init_params(&c, 3).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(d1, d2);
        let (g3, _) = init_params(&c, 4).unwrap();
        assert_ne!(g1, g3);
    }

    #[test]
    fn config_hash_changes_with_config() {
        let a = table2();
        let mut b = a.clone();
        b.fused_gates = true;
        assert_eq!(a.hash(), table2().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn zero_width_is_rejected() {
        let mut c = table2();
        c.branches[Attribute::Duration].hidden_dim = 0;
        assert!(init_params(&c, 0).is_err());
    }
}
