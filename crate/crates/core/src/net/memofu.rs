//! Three stacked two-layer LSTM branches (pitch, duration, rest). The first
//! ("in") layer of each branch fuses the previous fusion-layer states of all
//! branches into its candidate cell; the second ("out") layer is independent.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{glorot_uniform, orthogonal, BoundParams, ParamStore};
use super::{branch_prefix, ModelConfig};
use crate::attr::{Attribute, PerAttr};
use crate::error::{Error, Result};
use crate::tape::{softmax_rows, Graph, Var};
use crate::train::{argmax_one_hot, gumbel_noise, gumbel_softmax_graph, TemperatureConvention};

/// Generator weights plus the configuration that shaped them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemofuParams {
    pub config: ModelConfig,
    pub store: ParamStore,
}

fn name(a: Attribute, part: &str) -> String {
    format!("{}.{part}", branch_prefix(a))
}

fn fuse_name(from: Attribute, to: Attribute) -> String {
    format!("{}.fuse.{}", branch_prefix(to), branch_prefix(from))
}

/// `rows × 4h` with each `h`-wide gate block orthogonal.
fn orthogonal_blocks(rows: usize, h: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut out = Array2::zeros((rows, 4 * h));
    for k in 0..4 {
        out.slice_mut(ndarray::s![.., k * h..(k + 1) * h])
            .assign(&orthogonal(rows, h, rng));
    }
    out
}

fn glorot_blocks(rows: usize, h: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut out = Array2::zeros((rows, 4 * h));
    for k in 0..4 {
        out.slice_mut(ndarray::s![.., k * h..(k + 1) * h])
            .assign(&glorot_uniform(rows, h, rng));
    }
    out
}

/// Gate bias `[i, f, o, c]` with the forget block at 1.
pub(crate) fn lstm_bias(h: usize) -> Array2<f64> {
    let mut b = Array2::zeros((1, 4 * h));
    b.slice_mut(ndarray::s![.., h..2 * h]).fill(1.0);
    b
}

impl MemofuParams {
    pub(crate) fn init(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut store = ParamStore::new();
        for a in Attribute::ALL {
            let b = config.branches[a];
            let h = b.hidden_dim;
            let u = b.lstm_units;
            store.insert(name(a, "emb"), glorot_uniform(b.output_dim, b.embed_dim, rng));
            store.insert(name(a, "start"), glorot_uniform(1, b.embed_dim, rng));
            store.insert(name(a, "in.W"), glorot_blocks(config.branch_input_dim(a), h, rng));
            store.insert(name(a, "in.U"), orthogonal_blocks(h, h, rng));
            store.insert(name(a, "in.b"), lstm_bias(h));
            for from in Attribute::ALL {
                if from != a {
                    let hf = config.branches[from].hidden_dim;
                    let w = if config.fused_gates {
                        glorot_blocks(hf, h, rng)
                    } else {
                        glorot_uniform(hf, h, rng)
                    };
                    store.insert(fuse_name(from, a), w);
                }
            }
            store.insert(name(a, "out.W"), glorot_blocks(h, u, rng));
            store.insert(name(a, "out.U"), orthogonal_blocks(u, u, rng));
            store.insert(name(a, "out.b"), lstm_bias(u));
            store.insert(name(a, "head.W"), glorot_uniform(u, b.output_dim, rng));
            store.insert(name(a, "head.b"), Array2::zeros((1, b.output_dim)));
        }
        MemofuParams {
            config: config.clone(),
            store,
        }
    }

    /// Zeroes every cross-branch fusion matrix, leaving three independent stacked LSTMs.
    pub fn zero_fusion(&mut self) {
        for to in Attribute::ALL {
            for from in Attribute::ALL {
                if from != to {
                    self.store.get_mut(&fuse_name(from, to)).fill(0.0);
                }
            }
        }
    }

    /// Name of the fusion matrix carrying branch `from`'s state into branch `to`.
    pub fn fusion_param(from: Attribute, to: Attribute) -> String {
        fuse_name(from, to)
    }

    pub fn bind(&self, g: &mut Graph) -> (BoundParams, GenVars) {
        let bound = self.store.bind(g);
        let vars = GenVars::resolve(&bound);
        (bound, vars)
    }

    pub fn bind_frozen(&self, g: &mut Graph) -> GenVars {
        GenVars::resolve(&self.store.bind_frozen(g))
    }
}

#[derive(Clone, Copy, Debug)]
struct BranchVars {
    emb: Var,
    start: Var,
    in_w: Var,
    in_u: Var,
    in_b: Var,
    fuse: [Option<Var>; 3],
    out_w: Var,
    out_u: Var,
    out_b: Var,
    head_w: Var,
    head_b: Var,
}

/// Graph handles of every generator weight.
#[derive(Clone, Debug)]
pub struct GenVars {
    branches: PerAttr<BranchVars>,
}

impl GenVars {
    fn resolve(p: &BoundParams) -> Self {
        GenVars {
            branches: PerAttr::from_fn(|a| BranchVars {
                emb: p.var(&name(a, "emb")),
                start: p.var(&name(a, "start")),
                in_w: p.var(&name(a, "in.W")),
                in_u: p.var(&name(a, "in.U")),
                in_b: p.var(&name(a, "in.b")),
                fuse: Attribute::ALL.map(|from| (from != a).then(|| p.var(&fuse_name(from, a)))),
                out_w: p.var(&name(a, "out.W")),
                out_u: p.var(&name(a, "out.U")),
                out_b: p.var(&name(a, "out.b")),
                head_w: p.var(&name(a, "head.W")),
                head_b: p.var(&name(a, "head.b")),
            }),
        }
    }
}

/// Per-branch `(c_in, h_in, c_out, h_out)`, each `batch × width`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchState {
    pub c_in: Array2<f64>,
    pub h_in: Array2<f64>,
    pub c_out: Array2<f64>,
    pub h_out: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemofuState {
    pub branches: PerAttr<BranchState>,
}

impl MemofuState {
    pub fn zeros(config: &ModelConfig, batch: usize) -> Self {
        MemofuState {
            branches: PerAttr::from_fn(|a| {
                let b = config.branches[a];
                BranchState {
                    c_in: Array2::zeros((batch, b.hidden_dim)),
                    h_in: Array2::zeros((batch, b.hidden_dim)),
                    c_out: Array2::zeros((batch, b.lstm_units)),
                    h_out: Array2::zeros((batch, b.lstm_units)),
                }
            }),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.branches.iter().all(|(_, s)| {
            [&s.c_in, &s.h_in, &s.c_out, &s.h_out]
                .iter()
                .all(|m| m.iter().all(|x| x.is_finite()))
        })
    }
}

/// Graph handles of a [`MemofuState`].
#[derive(Clone, Copy, Debug)]
pub struct StateVars {
    pub c_in: [Var; 3],
    pub h_in: [Var; 3],
    pub c_out: [Var; 3],
    pub h_out: [Var; 3],
}

impl StateVars {
    pub fn constant(g: &mut Graph, s: &MemofuState) -> Self {
        let mut pick = |f: fn(&BranchState) -> &Array2<f64>| Attribute::ALL.map(|a| g.constant(f(&s.branches[a]).clone()));
        StateVars {
            c_in: pick(|b| &b.c_in),
            h_in: pick(|b| &b.h_in),
            c_out: pick(|b| &b.c_out),
            h_out: pick(|b| &b.h_out),
        }
    }

    pub fn zeros(g: &mut Graph, config: &ModelConfig, batch: usize) -> Self {
        Self::constant(g, &MemofuState::zeros(config, batch))
    }

    pub fn leaves(g: &mut Graph, s: &MemofuState) -> Self {
        let mut pick = |f: fn(&BranchState) -> &Array2<f64>| Attribute::ALL.map(|a| g.leaf(f(&s.branches[a]).clone()));
        StateVars {
            c_in: pick(|b| &b.c_in),
            h_in: pick(|b| &b.h_in),
            c_out: pick(|b| &b.c_out),
            h_out: pick(|b| &b.h_out),
        }
    }

    pub fn value(&self, g: &Graph) -> MemofuState {
        MemofuState {
            branches: PerAttr::from_fn(|a| {
                let i = a.index();
                BranchState {
                    c_in: g.value(self.c_in[i]).clone(),
                    h_in: g.value(self.h_in[i]).clone(),
                    c_out: g.value(self.c_out[i]).clone(),
                    h_out: g.value(self.h_out[i]).clone(),
                }
            }),
        }
    }
}

/// `c = f∘c_prev + i∘tanh(cand)`, `h = o∘tanh(c)` from `[i, f, o, c]` preactivations.
fn lstm_update(g: &mut Graph, gates: Var, cand_pre: Var, c_prev: Var, h: usize) -> (Var, Var) {
    let i_pre = g.slice_cols(gates, 0, h);
    let f_pre = g.slice_cols(gates, h, 2 * h);
    let o_pre = g.slice_cols(gates, 2 * h, 3 * h);
    let i = g.sigmoid(i_pre);
    let f = g.sigmoid(f_pre);
    let o = g.sigmoid(o_pre);
    let cand = g.tanh(cand_pre);
    let keep = g.mul(f, c_prev);
    let write = g.mul(i, cand);
    let c = g.add(keep, write);
    let tc = g.tanh(c);
    let h_new = g.mul(o, tc);
    (c, h_new)
}

/// One time step of all three branches on the tape.
///
/// `prev[a]` is the previous token of branch `a` as a `batch × K` simplex
/// (`None` selects the learned start embedding); `rse[a]` is the branch's
/// style embedding, or `None` when style conditioning is disabled.
pub fn step_graph(
    g: &mut Graph,
    v: &GenVars,
    config: &ModelConfig,
    state: &StateVars,
    x_t: Var,
    prev: &PerAttr<Option<Var>>,
    rse: &PerAttr<Option<Var>>,
) -> (StateVars, PerAttr<Var>) {
    let batch = g.shape(x_t).0;
    let mut next = *state;
    // fusion layer: every branch reads the previous fusion states of all branches
    for a in Attribute::ALL {
        let bv = v.branches[a];
        let h = config.branches[a].hidden_dim;
        let i = a.index();
        let emb = match prev[a] {
            Some(tok) => g.matmul(tok, bv.emb),
            None => g.broadcast_rows(bv.start, batch),
        };
        let mut parts = vec![x_t, emb];
        if let Some(r) = rse[a] {
            parts.push(r);
        }
        let u = g.concat_cols(&parts);
        let wu = g.matmul(u, bv.in_w);
        let uh = g.matmul(state.h_in[i], bv.in_u);
        let pre = g.add(wu, uh);
        let mut pre = g.add_row(pre, bv.in_b);
        let mut cand_pre = None;
        for from in Attribute::ALL {
            let Some(fw) = bv.fuse[from.index()] else { continue };
            let term = g.matmul(state.h_in[from.index()], fw);
            if config.fused_gates {
                pre = g.add(pre, term);
            } else {
                let base = match cand_pre {
                    Some(c) => c,
                    None => g.slice_cols(pre, 3 * h, 4 * h),
                };
                cand_pre = Some(g.add(base, term));
            }
        }
        let cand_pre = match cand_pre {
            Some(c) => c,
            None => g.slice_cols(pre, 3 * h, 4 * h),
        };
        let (c, hn) = lstm_update(g, pre, cand_pre, state.c_in[i], h);
        next.c_in[i] = c;
        next.h_in[i] = hn;
    }
    // output layer and heads
    let logits = PerAttr::from_fn(|a| {
        let bv = v.branches[a];
        let u = config.branches[a].lstm_units;
        let i = a.index();
        let wx = g.matmul(next.h_in[i], bv.out_w);
        let uh = g.matmul(state.h_out[i], bv.out_u);
        let pre = g.add(wx, uh);
        let pre = g.add_row(pre, bv.out_b);
        let cand = g.slice_cols(pre, 3 * u, 4 * u);
        let (c, hn) = lstm_update(g, pre, cand, state.c_out[i], u);
        next.c_out[i] = c;
        next.h_out[i] = hn;
        let y = g.matmul(hn, bv.head_w);
        g.add_row(y, bv.head_b)
    });
    (next, logits)
}

fn check_dims(what: &str, m: &Array2<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows {
        return Err(Error::DimensionMismatch {
            what: format!("{what} rows"),
            expected: rows,
            found: m.nrows(),
        });
    }
    if m.ncols() != cols {
        return Err(Error::DimensionMismatch {
            what: format!("{what} columns"),
            expected: cols,
            found: m.ncols(),
        });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what.to_string()));
    }
    Ok(())
}

fn check_state(config: &ModelConfig, state: &MemofuState, batch: usize) -> Result<()> {
    for (a, s) in state.branches.iter() {
        let b = config.branches[a];
        check_dims(&format!("{a} c_in"), &s.c_in, batch, b.hidden_dim)?;
        check_dims(&format!("{a} h_in"), &s.h_in, batch, b.hidden_dim)?;
        check_dims(&format!("{a} c_out"), &s.c_out, batch, b.lstm_units)?;
        check_dims(&format!("{a} h_out"), &s.h_out, batch, b.lstm_units)?;
    }
    Ok(())
}

fn check_rse(config: &ModelConfig, rse: &PerAttr<Array2<f64>>, batch: usize) -> Result<()> {
    for (a, r) in rse.iter() {
        let rows = if config.rse_dims[a] == 0 && r.is_empty() { r.nrows() } else { batch };
        check_dims(&format!("{a} style embedding"), r, rows, config.rse_dims[a])?;
    }
    Ok(())
}

fn rse_vars(g: &mut Graph, config: &ModelConfig, rse: &PerAttr<Array2<f64>>) -> PerAttr<Option<Var>> {
    rse.map(|a, r| (config.rse_dims[a] > 0).then(|| g.constant(r.clone())))
}

/// One generator step outside of training: returns the new state and per-branch logits.
pub fn memofu_step(
    params: &MemofuParams,
    state: &MemofuState,
    x_t: &Array2<f64>,
    prev_tokens: &PerAttr<Option<Array2<f64>>>,
    rse: &PerAttr<Array2<f64>>,
) -> Result<(MemofuState, PerAttr<Array2<f64>>)> {
    let cfg = &params.config;
    let batch = x_t.nrows();
    check_dims("lyric vector", x_t, batch, cfg.lyric_dim)?;
    check_state(cfg, state, batch)?;
    check_rse(cfg, rse, batch)?;
    for (a, p) in prev_tokens.iter() {
        if let Some(p) = p {
            check_dims(&format!("{a} previous token"), p, batch, cfg.branches[a].output_dim)?;
        }
    }
    let mut g = Graph::new();
    let v = params.bind_frozen(&mut g);
    let sv = StateVars::constant(&mut g, state);
    let x = g.constant(x_t.clone());
    let prev = prev_tokens.map(|_, p| p.as_ref().map(|p| g.constant(p.clone())));
    let r = rse_vars(&mut g, cfg, rse);
    let (next, logits) = step_graph(&mut g, &v, cfg, &sv, x, &prev, &r);
    let out_state = next.value(&g);
    if !out_state.is_finite() {
        return Err(Error::NonFinite("generator state".into()));
    }
    Ok((out_state, logits.map(|_, &l| g.value(l).clone())))
}

/// Which previous token the first step sees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialTokenPolicy {
    /// The branch's learned start embedding.
    #[default]
    LearnedStart,
    /// A fixed class per branch, fed as a one-hot.
    Class(PerAttr<usize>),
}

/// Graph handles produced by a rollout: per-branch, per-step logits and fed tokens.
#[derive(Clone, Debug)]
pub struct RolloutVars {
    pub logits: PerAttr<Vec<Var>>,
    pub tokens: PerAttr<Vec<Var>>,
    pub final_state: StateVars,
}

/// Unrolls the generator over `lyrics.len()` steps. `feed` turns each step's
/// logits into the token passed to the next step (ground truth under teacher
/// forcing, a sample otherwise).
pub fn rollout_graph(
    g: &mut Graph,
    v: &GenVars,
    config: &ModelConfig,
    lyrics: &[Var],
    rse: &PerAttr<Option<Var>>,
    initial: &InitialTokenPolicy,
    mut feed: impl FnMut(&mut Graph, Attribute, usize, Var) -> Result<Var>,
) -> Result<RolloutVars> {
    let Some(&first) = lyrics.first() else {
        return Err(Error::EmptySequence);
    };
    let batch = g.shape(first).0;
    let mut state = StateVars::zeros(g, config, batch);
    let mut prev: PerAttr<Option<Var>> = match initial {
        InitialTokenPolicy::LearnedStart => PerAttr::new(None, None, None),
        InitialTokenPolicy::Class(classes) => PerAttr::from_fn(|a| {
            let k = config.branches[a].output_dim;
            let mut m = Array2::zeros((batch, k));
            m.column_mut(classes[a].min(k - 1)).fill(1.0);
            Some(g.constant(m))
        }),
    };
    let mut logits = PerAttr::new(Vec::new(), Vec::new(), Vec::new());
    let mut tokens = PerAttr::new(Vec::new(), Vec::new(), Vec::new());
    for (t, &x) in lyrics.iter().enumerate() {
        let (next, step_logits) = step_graph(g, v, config, &state, x, &prev, rse);
        state = next;
        for a in Attribute::ALL {
            let tok = feed(g, a, t, step_logits[a])?;
            logits[a].push(step_logits[a]);
            tokens[a].push(tok);
            prev[a] = Some(tok);
        }
    }
    Ok(RolloutVars {
        logits,
        tokens,
        final_state: state,
    })
}

/// Token selection for free-running generation.
pub enum Sampler<'a> {
    /// Arg-max of the logits.
    Greedy,
    /// A draw from softmax(logits), via the Gumbel-max trick.
    Categorical(&'a mut ChaCha8Rng),
    /// Gumbel-softmax relaxation at a temperature; tokens are the hard samples.
    GumbelSt {
        temperature: f64,
        convention: TemperatureConvention,
        rng: &'a mut ChaCha8Rng,
    },
}

/// Output of [`generator_rollout`]; each `Vec` is indexed by time step.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    /// `batch × K` distributions per step: softmax of the logits, or the
    /// relaxed sample under [`Sampler::GumbelSt`].
    pub soft: PerAttr<Vec<Array2<f64>>>,
    /// `batch × K` one-hots per step.
    pub hard: PerAttr<Vec<Array2<f64>>>,
    /// Chosen class per sequence and step: `tokens[a][b][t]`.
    pub tokens: PerAttr<Vec<Vec<usize>>>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.soft[Attribute::Pitch].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `T × K` distribution sequence of one batch row.
    pub fn soft_sequence(&self, a: Attribute, row: usize) -> Array2<f64> {
        let steps = &self.soft[a];
        let k = steps.first().map_or(0, |m| m.ncols());
        Array2::from_shape_fn((steps.len(), k), |(t, j)| steps[t][[row, j]])
    }
}

/// Free-running generation for a batch.
///
/// `lyrics[t]` is the `batch × lyric_dim` matrix of step `t`; `rse[a]` is
/// `batch × rse_dims[a]`.
pub fn generator_rollout(
    params: &MemofuParams,
    lyrics: &[Array2<f64>],
    rse: &PerAttr<Array2<f64>>,
    sampler: &mut Sampler<'_>,
    initial: &InitialTokenPolicy,
) -> Result<Rollout> {
    let cfg = &params.config;
    let Some(first) = lyrics.first() else {
        return Err(Error::EmptySequence);
    };
    let batch = first.nrows();
    for (t, x) in lyrics.iter().enumerate() {
        check_dims(&format!("lyric vectors at step {t}"), x, batch, cfg.lyric_dim)?;
    }
    check_rse(cfg, rse, batch)?;
    let mut g = Graph::new();
    let v = params.bind_frozen(&mut g);
    let xs: Vec<Var> = lyrics.iter().map(|x| g.constant(x.clone())).collect();
    let r = rse_vars(&mut g, cfg, rse);
    let mut soft = PerAttr::new(Vec::new(), Vec::new(), Vec::new());
    let mut hard = PerAttr::new(Vec::new(), Vec::new(), Vec::new());
    let rv = rollout_graph(&mut g, &v, cfg, &xs, &r, initial, |g, a, _t, logits| {
        let l = g.value(logits).clone();
        if l.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("{a} logits")));
        }
        let (s, h) = match sampler {
            Sampler::Greedy => (softmax_rows(&l), argmax_one_hot(&l)),
            Sampler::Categorical(rng) => {
                let noisy = &l + &gumbel_noise(l.dim(), rng);
                (softmax_rows(&l), argmax_one_hot(&noisy))
            }
            Sampler::GumbelSt {
                temperature,
                convention,
                rng,
            } => {
                let noise = gumbel_noise(l.dim(), rng);
                let (s, h) = gumbel_softmax_graph(g, logits, noise, *temperature, *convention);
                (g.value(s).clone(), g.value(h).clone())
            }
        };
        soft[a].push(s);
        let tok = g.constant(h.clone());
        hard[a].push(h);
        Ok(tok)
    })?;
    drop(rv);
    let tokens = hard.map(|_, steps: &Vec<Array2<f64>>| {
        (0..batch)
            .map(|b| {
                steps
                    .iter()
                    .map(|m| m.row(b).iter().position(|&x| x == 1.0).unwrap_or(0))
                    .collect()
            })
            .collect()
    });
    Ok(Rollout { soft, hard, tokens })
}
