//! Sequence discriminator: per-step token embeddings, lyric vector and style
//! embedding, a dense projection, one LSTM layer and a linear score of the
//! last hidden state.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::memofu::lstm_bias;
use super::params::{glorot_uniform, orthogonal, BoundParams, ParamStore};
use super::{branch_prefix, ModelConfig};
use crate::attr::{Attribute, PerAttr};
use crate::error::{Error, Result};
use crate::tape::{Graph, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorParams {
    pub config: ModelConfig,
    pub store: ParamStore,
}

fn emb_name(a: Attribute) -> String {
    format!("d.emb.{}", branch_prefix(a))
}

impl DiscriminatorParams {
    pub(crate) fn init(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = config.discriminator;
        let mut store = ParamStore::new();
        for a in Attribute::ALL {
            store.insert(emb_name(a), glorot_uniform(config.branches[a].output_dim, d.embed_dims[a], rng));
        }
        store.insert("d.proj.W", glorot_uniform(config.disc_input_dim(), d.hidden_dim, rng));
        store.insert("d.proj.b", Array2::zeros((1, d.hidden_dim)));
        let mut w = Array2::zeros((d.hidden_dim, 4 * d.lstm_units));
        let mut u = Array2::zeros((d.lstm_units, 4 * d.lstm_units));
        for k in 0..4 {
            let cols = ndarray::s![.., k * d.lstm_units..(k + 1) * d.lstm_units];
            w.slice_mut(cols).assign(&glorot_uniform(d.hidden_dim, d.lstm_units, rng));
            u.slice_mut(cols).assign(&orthogonal(d.lstm_units, d.lstm_units, rng));
        }
        store.insert("d.lstm.W", w);
        store.insert("d.lstm.U", u);
        store.insert("d.lstm.b", lstm_bias(d.lstm_units));
        store.insert("d.out.W", glorot_uniform(d.lstm_units, 1, rng));
        store.insert("d.out.b", Array2::zeros((1, 1)));
        DiscriminatorParams {
            config: config.clone(),
            store,
        }
    }

    pub fn bind(&self, g: &mut Graph) -> (BoundParams, DiscVars) {
        let bound = self.store.bind(g);
        let vars = DiscVars::resolve(&bound);
        (bound, vars)
    }

    pub fn bind_frozen(&self, g: &mut Graph) -> DiscVars {
        DiscVars::resolve(&self.store.bind_frozen(g))
    }
}

#[derive(Clone, Debug)]
pub struct DiscVars {
    emb: PerAttr<Var>,
    proj_w: Var,
    proj_b: Var,
    lstm_w: Var,
    lstm_u: Var,
    lstm_b: Var,
    out_w: Var,
    out_b: Var,
}

impl DiscVars {
    fn resolve(p: &BoundParams) -> Self {
        DiscVars {
            emb: PerAttr::from_fn(|a| p.var(&emb_name(a))),
            proj_w: p.var("d.proj.W"),
            proj_b: p.var("d.proj.b"),
            lstm_w: p.var("d.lstm.W"),
            lstm_u: p.var("d.lstm.U"),
            lstm_b: p.var("d.lstm.b"),
            out_w: p.var("d.out.W"),
            out_b: p.var("d.out.b"),
        }
    }
}

/// Scores a batch of sequences on the tape; returns `batch × 1` logits.
///
/// `tokens[a][t]` is a `batch × K` one-hot or simplex; embedding is a matrix
/// product, so soft and hard vectors are treated identically. `rse` is the
/// concatenated style embedding of all branches, or `None` without style.
pub fn score_graph(
    g: &mut Graph,
    v: &DiscVars,
    config: &ModelConfig,
    tokens: &PerAttr<Vec<Var>>,
    lyrics: &[Var],
    rse: Option<Var>,
) -> Var {
    let u = config.discriminator.lstm_units;
    let batch = g.shape(lyrics[0]).0;
    let mut h = g.constant(Array2::zeros((batch, u)));
    let mut c = g.constant(Array2::zeros((batch, u)));
    for (t, &x) in lyrics.iter().enumerate() {
        let mut parts: Vec<Var> = Attribute::ALL
            .iter()
            .map(|&a| g.matmul(tokens[a][t], v.emb[a]))
            .collect();
        parts.push(x);
        if let Some(r) = rse {
            parts.push(r);
        }
        let inp = g.concat_cols(&parts);
        let z = g.matmul(inp, v.proj_w);
        let z = g.add_row(z, v.proj_b);
        let z = g.tanh(z);
        let wx = g.matmul(z, v.lstm_w);
        let uh = g.matmul(h, v.lstm_u);
        let pre = g.add(wx, uh);
        let pre = g.add_row(pre, v.lstm_b);
        let i_pre = g.slice_cols(pre, 0, u);
        let f_pre = g.slice_cols(pre, u, 2 * u);
        let o_pre = g.slice_cols(pre, 2 * u, 3 * u);
        let c_pre = g.slice_cols(pre, 3 * u, 4 * u);
        let i = g.sigmoid(i_pre);
        let f = g.sigmoid(f_pre);
        let o = g.sigmoid(o_pre);
        let cand = g.tanh(c_pre);
        let keep = g.mul(f, c);
        let write = g.mul(i, cand);
        c = g.add(keep, write);
        let tc = g.tanh(c);
        h = g.mul(o, tc);
    }
    let y = g.matmul(h, v.out_w);
    g.add_row(y, v.out_b)
}

/// Logits for a batch: `tokens[a]` holds `T` matrices of `batch × K`,
/// `lyrics` holds `T` matrices of `batch × lyric_dim` and `rse` is
/// `batch × Σ rse_dims` (ignored when style is disabled).
pub fn discriminator_scores(
    params: &DiscriminatorParams,
    tokens: &PerAttr<Vec<Array2<f64>>>,
    lyrics: &[Array2<f64>],
    rse: &Array2<f64>,
) -> Result<Vec<f64>> {
    let cfg = &params.config;
    let steps = lyrics.len();
    if steps == 0 {
        return Err(Error::EmptySequence);
    }
    let batch = lyrics[0].nrows();
    for (a, seq) in tokens.iter() {
        if seq.len() != steps {
            return Err(Error::DimensionMismatch {
                what: format!("{a} token steps"),
                expected: steps,
                found: seq.len(),
            });
        }
        for m in seq {
            if m.dim() != (batch, cfg.branches[a].output_dim) {
                return Err(Error::DimensionMismatch {
                    what: format!("{a} token width"),
                    expected: cfg.branches[a].output_dim,
                    found: m.ncols(),
                });
            }
        }
    }
    for x in lyrics {
        if x.dim() != (batch, cfg.lyric_dim) {
            return Err(Error::DimensionMismatch {
                what: "lyric vector width".into(),
                expected: cfg.lyric_dim,
                found: x.ncols(),
            });
        }
    }
    if cfg.uses_rse() && rse.dim() != (batch, cfg.rse_total()) {
        return Err(Error::DimensionMismatch {
            what: "style embedding width".into(),
            expected: cfg.rse_total(),
            found: rse.ncols(),
        });
    }
    let mut g = Graph::new();
    let v = params.bind_frozen(&mut g);
    let tok = tokens.map(|_, seq| seq.iter().map(|m| g.constant(m.clone())).collect::<Vec<_>>());
    let xs: Vec<Var> = lyrics.iter().map(|x| g.constant(x.clone())).collect();
    let r = cfg.uses_rse().then(|| g.constant(rse.clone()));
    let out = score_graph(&mut g, &v, cfg, &tok, &xs, r);
    Ok(g.value(out).column(0).to_vec())
}

/// Logit of one sequence: `tokens[a]` is `T × K`, `lyrics` is `T × lyric_dim`,
/// `rse` is `1 × Σ rse_dims`.
pub fn discriminator_score(
    params: &DiscriminatorParams,
    tokens: &PerAttr<Array2<f64>>,
    lyrics: &Array2<f64>,
    rse: &Array2<f64>,
) -> Result<f64> {
    let steps = lyrics.nrows();
    let tok = tokens.map(|_, m| {
        (0..m.nrows())
            .map(|t| m.row(t).to_owned().insert_axis(ndarray::Axis(0)))
            .collect::<Vec<_>>()
    });
    let xs: Vec<Array2<f64>> = (0..steps)
        .map(|t| lyrics.row(t).to_owned().insert_axis(ndarray::Axis(0)))
        .collect();
    Ok(discriminator_scores(params, &tok, &xs, rse)?[0])
}
