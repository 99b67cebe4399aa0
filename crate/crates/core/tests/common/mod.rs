//! Independent oracles shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use conl2m::attr::{Attribute, PerAttr};
use conl2m::net::{
    discriminator_score, init_params, memofu_step, rollout_graph, score_graph, step_graph, BranchConfig, BranchState,
    DiscConfig, InitialTokenPolicy, MemofuParams, MemofuState, ModelConfig, ParamStore, StateVars,
};
use conl2m::rng::stream_rng;
use conl2m::tape::{Graph, Var};
use ndarray::{s, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-scale..scale))
}

/// Random rows on the simplex.
pub fn simplex(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut m = Array2::from_shape_simple_fn((rows, cols), || rng.random_range(0.05..1.0));
    for mut r in m.rows_mut() {
        let s = r.sum();
        r /= s;
    }
    m
}

pub fn one_hot(rows: &[usize], k: usize) -> Array2<f64> {
    let mut m = Array2::zeros((rows.len(), k));
    for (i, &c) in rows.iter().enumerate() {
        m[[i, c]] = 1.0;
    }
    m
}

/// A random configuration with every width at most 8.
pub fn random_small_config(rng: &mut impl Rng) -> ModelConfig {
    let with_rse = rng.random_bool(0.7);
    ModelConfig {
        lyric_dim: rng.random_range(1..=4),
        branches: PerAttr::from_fn(|_| BranchConfig {
            embed_dim: rng.random_range(1..=4),
            hidden_dim: rng.random_range(1..=8),
            lstm_units: rng.random_range(1..=8),
            output_dim: rng.random_range(2..=5),
        }),
        rse_dims: PerAttr::from_fn(|_| if with_rse { rng.random_range(1..=3) } else { 0 }),
        fused_gates: rng.random_bool(0.5),
        discriminator: DiscConfig {
            embed_dims: PerAttr::from_fn(|_| rng.random_range(1..=4)),
            hidden_dim: rng.random_range(1..=8),
            lstm_units: rng.random_range(1..=8),
        },
    }
}

/// Largest relative error over tensors: `max|a − n| / max(max|a|, max|n|)`.
fn tensor_error(analytic: &Array2<f64>, numeric: &Array2<f64>) -> f64 {
    let diff = (analytic - numeric).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = analytic
        .iter()
        .chain(numeric.iter())
        .fold(0.0f64, |m, x| m.max(x.abs()));
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

const H: f64 = 1e-5;

fn central_difference(store: &mut ParamStore, name: &str, f: &mut impl FnMut(&ParamStore) -> f64) -> Array2<f64> {
    let shape = store.get(name).dim();
    let mut out = Array2::zeros(shape);
    for i in 0..shape.0 {
        for j in 0..shape.1 {
            let orig = store.get(name)[[i, j]];
            store.get_mut(name)[[i, j]] = orig + H;
            let up = f(store);
            store.get_mut(name)[[i, j]] = orig - H;
            let down = f(store);
            store.get_mut(name)[[i, j]] = orig;
            out[[i, j]] = (up - down) / (2.0 * H);
        }
    }
    out
}

/// Inputs of a short generator unroll: lyric vectors, previous tokens
/// (`None` at the first step), style embeddings and a non-zero start state.
pub struct StepInputs {
    pub xs: Vec<Array2<f64>>,
    pub prev: Vec<PerAttr<Option<Array2<f64>>>>,
    pub rse: PerAttr<Array2<f64>>,
    pub state: MemofuState,
    /// Projection weights turning logits and the final state into a scalar.
    pub logit_w: Vec<PerAttr<Array2<f64>>>,
    pub state_w: MemofuState,
}

impl StepInputs {
    pub fn random(cfg: &ModelConfig, batch: usize, steps: usize, rng: &mut impl Rng) -> Self {
        let rand_state = |rng: &mut _| MemofuState {
            branches: PerAttr::from_fn(|a| {
                let b = cfg.branches[a];
                BranchState {
                    c_in: uniform(batch, b.hidden_dim, 0.5, rng),
                    h_in: uniform(batch, b.hidden_dim, 0.5, rng),
                    c_out: uniform(batch, b.lstm_units, 0.5, rng),
                    h_out: uniform(batch, b.lstm_units, 0.5, rng),
                }
            }),
        };
        let state = rand_state(rng);
        let state_w = rand_state(rng);
        StepInputs {
            xs: (0..steps).map(|_| uniform(batch, cfg.lyric_dim, 1.0, rng)).collect(),
            prev: (0..steps)
                .map(|t| PerAttr::from_fn(|a| (t > 0).then(|| simplex(batch, cfg.branches[a].output_dim, rng))))
                .collect(),
            rse: PerAttr::from_fn(|a| {
                let mut m = Array2::zeros((batch, cfg.rse_dims[a]));
                for mut r in m.rows_mut() {
                    if !r.is_empty() {
                        let k = rng.random_range(0..r.len());
                        r[k] = 1.0;
                    }
                }
                m
            }),
            state,
            logit_w: (0..steps)
                .map(|_| PerAttr::from_fn(|a| uniform(batch, cfg.branches[a].output_dim, 1.0, rng)))
                .collect(),
            state_w,
        }
    }
}

fn state_dot(s: &MemofuState, w: &MemofuState) -> f64 {
    s.branches
        .iter()
        .map(|(a, b)| {
            let o = &w.branches[a];
            (&b.c_in * &o.c_in).sum() + (&b.h_in * &o.h_in).sum() + (&b.c_out * &o.c_out).sum() + (&b.h_out * &o.h_out).sum()
        })
        .sum()
}

/// Scalar objective through repeated `memofu_step` calls.
fn memofu_objective(params: &MemofuParams, inp: &StepInputs) -> f64 {
    let mut state = inp.state.clone();
    let mut total = 0.0;
    for (t, x) in inp.xs.iter().enumerate() {
        let (next, logits) = memofu_step(params, &state, x, &inp.prev[t], &inp.rse).expect("valid step");
        for (a, l) in logits.iter() {
            total += (l * &inp.logit_w[t][a]).sum();
        }
        state = next;
    }
    total + state_dot(&state, &inp.state_w)
}

fn weighted_sum(g: &mut Graph, v: Var, w: &Array2<f64>) -> Var {
    let c = g.constant(w.clone());
    let p = g.mul(v, c);
    g.sum_all(p)
}

/// Worst per-tensor relative error between tape gradients and central
/// differences of an unrolled `memofu_step`, over every generator weight.
pub fn memofu_gradient_error(params: &MemofuParams, inp: &StepInputs) -> (f64, String) {
    let cfg = &params.config;
    let mut g = Graph::new();
    let (bound, vars) = params.bind(&mut g);
    let mut state = StateVars::constant(&mut g, &inp.state);
    let rse = PerAttr::from_fn(|a| (cfg.rse_dims[a] > 0).then(|| g.constant(inp.rse[a].clone())));
    let mut terms = Vec::new();
    for (t, x) in inp.xs.iter().enumerate() {
        let xv = g.constant(x.clone());
        let prev = PerAttr::from_fn(|a| inp.prev[t][a].as_ref().map(|p| g.constant(p.clone())));
        let (next, logits) = step_graph(&mut g, &vars, cfg, &state, xv, &prev, &rse);
        for a in Attribute::ALL {
            terms.push(weighted_sum(&mut g, logits[a], &inp.logit_w[t][a]));
        }
        state = next;
    }
    for a in Attribute::ALL {
        let i = a.index();
        let w = &inp.state_w.branches[a];
        terms.push(weighted_sum(&mut g, state.c_in[i], &w.c_in));
        terms.push(weighted_sum(&mut g, state.h_in[i], &w.h_in));
        terms.push(weighted_sum(&mut g, state.c_out[i], &w.c_out));
        terms.push(weighted_sum(&mut g, state.h_out[i], &w.h_out));
    }
    let mut loss = terms[0];
    for &t in &terms[1..] {
        loss = g.add(loss, t);
    }
    let analytic = bound.gradients(&params.store, &g.backward(loss));

    let mut p = params.clone();
    let names: Vec<String> = params.store.names().map(String::from).collect();
    let mut worst = (0.0, String::new());
    for name in names {
        let mut store = std::mem::take(&mut p.store);
        let numeric = central_difference(&mut store, &name, &mut |s| {
            let q = MemofuParams {
                config: cfg.clone(),
                store: s.clone(),
            };
            memofu_objective(&q, inp)
        });
        p.store = store;
        let e = tensor_error(analytic.get(&name), &numeric);
        if e > worst.0 {
            worst = (e, name);
        }
    }
    worst
}

/// Worst per-tensor relative error of discriminator gradients, covering every
/// weight and the token inputs, for one sequence of length `steps`.
pub fn disc_gradient_error(cfg: &ModelConfig, seed: u64, steps: usize) -> (f64, String) {
    let mut rng = stream_rng(seed, "disc-fd", 0);
    let (_, disc) = init_params(cfg, seed).expect("valid config");
    let tokens = PerAttr::from_fn(|a| simplex(steps, cfg.branches[a].output_dim, &mut rng));
    let lyrics = uniform(steps, cfg.lyric_dim, 1.0, &mut rng);
    let rse = uniform(1, cfg.rse_total(), 1.0, &mut rng);

    let mut g = Graph::new();
    let (bound, vars) = disc.bind(&mut g);
    let tok: PerAttr<Vec<Var>> = tokens.map(|_, m| {
        m.axis_iter(Axis(0))
            .map(|r| g.leaf(r.to_owned().insert_axis(Axis(0))))
            .collect()
    });
    let xs: Vec<Var> = lyrics
        .axis_iter(Axis(0))
        .map(|r| g.constant(r.to_owned().insert_axis(Axis(0))))
        .collect();
    let r = cfg.uses_rse().then(|| g.constant(rse.clone()));
    let out = score_graph(&mut g, &vars, cfg, &tok, &xs, r);
    let grads = g.backward(out);
    let analytic = bound.gradients(&disc.store, &grads);

    let mut worst = (0.0, String::new());
    let mut store = disc.store.clone();
    let names: Vec<String> = store.names().map(String::from).collect();
    for name in names {
        let numeric = central_difference(&mut store, &name, &mut |s| {
            let d = conl2m::net::DiscriminatorParams {
                config: cfg.clone(),
                store: s.clone(),
            };
            discriminator_score(&d, &tokens, &lyrics, &rse).expect("valid score")
        });
        let e = tensor_error(analytic.get(&name), &numeric);
        if e > worst.0 {
            worst = (e, name);
        }
    }
    for a in Attribute::ALL {
        let analytic_in = Array2::from_shape_fn(tokens[a].dim(), |(t, k)| {
            grads.get_or_zeros(tok[a][t], (1, tokens[a].ncols()))[[0, k]]
        });
        let mut numeric = Array2::zeros(tokens[a].dim());
        for t in 0..steps {
            for k in 0..tokens[a].ncols() {
                let eval = |d: f64| {
                    let mut tk = tokens.clone();
                    tk[a][[t, k]] += d;
                    discriminator_score(&disc, &tk, &lyrics, &rse).expect("valid score")
                };
                numeric[[t, k]] = (eval(H) - eval(-H)) / (2.0 * H);
            }
        }
        let e = tensor_error(&analytic_in, &numeric);
        if e > worst.0 {
            worst = (e, format!("{a} token input"));
        }
    }
    worst
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct CellCache {
    inp: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    i: Array2<f64>,
    f: Array2<f64>,
    o: Array2<f64>,
    g: Array2<f64>,
    c: Array2<f64>,
}

/// Plain LSTM cell with gate blocks `[i, f, o, c]`.
fn cell_forward(inp: &Array2<f64>, h: &Array2<f64>, c: &Array2<f64>, w: &Array2<f64>, u: &Array2<f64>, b: &Array2<f64>) -> (Array2<f64>, Array2<f64>, CellCache) {
    let n = h.ncols();
    let z = inp.dot(w) + h.dot(u) + b;
    let i = z.slice(s![.., 0..n]).mapv(sigmoid);
    let f = z.slice(s![.., n..2 * n]).mapv(sigmoid);
    let o = z.slice(s![.., 2 * n..3 * n]).mapv(sigmoid);
    let g = z.slice(s![.., 3 * n..4 * n]).mapv(f64::tanh);
    let c_new = &f * c + &i * &g;
    let h_new = &o * &c_new.mapv(f64::tanh);
    let cache = CellCache {
        inp: inp.clone(),
        h_prev: h.clone(),
        c_prev: c.clone(),
        i,
        f,
        o,
        g,
        c: c_new.clone(),
    };
    (h_new, c_new, cache)
}

struct CellGrads {
    w: Array2<f64>,
    u: Array2<f64>,
    b: Array2<f64>,
}

/// Backward through one cell; returns `(d_input, dh_prev, dc_prev)`.
fn cell_backward(
    k: &CellCache,
    dh: &Array2<f64>,
    dc_next: &Array2<f64>,
    w: &Array2<f64>,
    u: &Array2<f64>,
    acc: &mut CellGrads,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let tc = k.c.mapv(f64::tanh);
    let d_o = dh * &tc;
    let dc = dc_next + &(dh * &k.o * &tc.mapv(|t| 1.0 - t * t));
    let di = &dc * &k.g;
    let dg = &dc * &k.i;
    let df = &dc * &k.c_prev;
    let dc_prev = &dc * &k.f;
    let dz_i = di * &k.i.mapv(|x| x * (1.0 - x));
    let dz_f = df * &k.f.mapv(|x| x * (1.0 - x));
    let dz_o = d_o * &k.o.mapv(|x| x * (1.0 - x));
    let dz_g = dg * &k.g.mapv(|x| 1.0 - x * x);
    let dz = ndarray::concatenate![Axis(1), dz_i, dz_f, dz_o, dz_g];
    acc.w += &k.inp.t().dot(&dz);
    acc.u += &k.h_prev.t().dot(&dz);
    acc.b += &dz.sum_axis(Axis(0)).insert_axis(Axis(0));
    (dz.dot(&w.t()), dz.dot(&u.t()), dc_prev)
}

/// Result of the reference stacked LSTM: per-step logits and gradients of
/// `Σ_t <R_t, logits_t>` keyed by the library's parameter names.
pub struct VanillaOutput {
    pub logits: PerAttr<Vec<Array2<f64>>>,
    pub grads: Vec<(String, Array2<f64>)>,
}

/// Three independent two-layer LSTMs, written without the tape, teacher-forced
/// on `targets` (one-hot per step) and starting from the learned start embedding.
pub fn vanilla_stacked_lstm(
    params: &MemofuParams,
    xs: &[Array2<f64>],
    targets: &PerAttr<Vec<Array2<f64>>>,
    rse: &PerAttr<Array2<f64>>,
    weights: &PerAttr<Vec<Array2<f64>>>,
) -> VanillaOutput {
    let cfg = &params.config;
    let batch = xs[0].nrows();
    let mut logits = PerAttr::new(Vec::new(), Vec::new(), Vec::new());
    let mut grads = Vec::new();
    for a in Attribute::ALL {
        let p = a.letter().to_ascii_lowercase();
        let get = |n: &str| params.store.get(&format!("{p}.{n}")).clone();
        let (emb, start) = (get("emb"), get("start"));
        let (w1, u1, b1) = (get("in.W"), get("in.U"), get("in.b"));
        let (w2, u2, b2) = (get("out.W"), get("out.U"), get("out.b"));
        let (wh, bh) = (get("head.W"), get("head.b"));
        let bc = cfg.branches[a];
        let (mut h1, mut c1) = (Array2::zeros((batch, bc.hidden_dim)), Array2::zeros((batch, bc.hidden_dim)));
        let (mut h2, mut c2) = (Array2::zeros((batch, bc.lstm_units)), Array2::zeros((batch, bc.lstm_units)));
        let mut caches = Vec::new();
        for (t, x) in xs.iter().enumerate() {
            let e = if t == 0 {
                start.broadcast((batch, bc.embed_dim)).unwrap().to_owned()
            } else {
                targets[a][t - 1].dot(&emb)
            };
            let u = if cfg.rse_dims[a] > 0 {
                ndarray::concatenate![Axis(1), x.view(), e.view(), rse[a].view()]
            } else {
                ndarray::concatenate![Axis(1), x.view(), e.view()]
            };
            let (nh1, nc1, k1) = cell_forward(&u, &h1, &c1, &w1, &u1, &b1);
            let (nh2, nc2, k2) = cell_forward(&nh1, &h2, &c2, &w2, &u2, &b2);
            logits[a].push(nh2.dot(&wh) + &bh);
            (h1, c1, h2, c2) = (nh1, nc1, nh2.clone(), nc2);
            caches.push((k1, k2, nh2));
        }
        let zeros_like = |m: &Array2<f64>| Array2::<f64>::zeros(m.dim());
        let mut g1 = CellGrads {
            w: zeros_like(&w1),
            u: zeros_like(&u1),
            b: zeros_like(&b1),
        };
        let mut g2 = CellGrads {
            w: zeros_like(&w2),
            u: zeros_like(&u2),
            b: zeros_like(&b2),
        };
        let (mut gwh, mut gbh) = (zeros_like(&wh), zeros_like(&bh));
        let (mut gemb, mut gstart) = (zeros_like(&emb), zeros_like(&start));
        let mut dh1_next = Array2::zeros((batch, bc.hidden_dim));
        let mut dc1_next = Array2::zeros((batch, bc.hidden_dim));
        let mut dh2_next = Array2::zeros((batch, bc.lstm_units));
        let mut dc2_next = Array2::zeros((batch, bc.lstm_units));
        for t in (0..xs.len()).rev() {
            let (k1, k2, h2t) = &caches[t];
            let dy = &weights[a][t];
            gwh += &h2t.t().dot(dy);
            gbh += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
            let dh2 = dy.dot(&wh.t()) + &dh2_next;
            let (dh1_in, dh2_prev, dc2_prev) = cell_backward(k2, &dh2, &dc2_next, &w2, &u2, &mut g2);
            let dh1 = dh1_in + &dh1_next;
            let (du, dh1_prev, dc1_prev) = cell_backward(k1, &dh1, &dc1_next, &w1, &u1, &mut g1);
            let de = du.slice(s![.., cfg.lyric_dim..cfg.lyric_dim + bc.embed_dim]).to_owned();
            if t == 0 {
                gstart += &de.sum_axis(Axis(0)).insert_axis(Axis(0));
            } else {
                gemb += &targets[a][t - 1].t().dot(&de);
            }
            (dh1_next, dc1_next, dh2_next, dc2_next) = (dh1_prev, dc1_prev, dh2_prev, dc2_prev);
        }
        for (n, m) in [
            ("emb", gemb),
            ("start", gstart),
            ("in.W", g1.w),
            ("in.U", g1.u),
            ("in.b", g1.b),
            ("out.W", g2.w),
            ("out.U", g2.u),
            ("out.b", g2.b),
            ("head.W", gwh),
            ("head.b", gbh),
        ] {
            grads.push((format!("{p}.{n}"), m));
        }
    }
    VanillaOutput { logits, grads }
}

/// The library's teacher-forced rollout and tape gradients on the same inputs.
pub fn tape_rollout(
    params: &MemofuParams,
    xs: &[Array2<f64>],
    targets: &PerAttr<Vec<Array2<f64>>>,
    rse: &PerAttr<Array2<f64>>,
    weights: &PerAttr<Vec<Array2<f64>>>,
) -> (PerAttr<Vec<Array2<f64>>>, ParamStore) {
    let cfg = &params.config;
    let mut g = Graph::new();
    let (bound, vars) = params.bind(&mut g);
    let x: Vec<Var> = xs.iter().map(|m| g.constant(m.clone())).collect();
    let r = PerAttr::from_fn(|a| (cfg.rse_dims[a] > 0).then(|| g.constant(rse[a].clone())));
    let rv = rollout_graph(&mut g, &vars, cfg, &x, &r, &InitialTokenPolicy::LearnedStart, |g, a, t, _| {
        Ok(g.constant(targets[a][t].clone()))
    })
    .expect("rollout");
    let mut terms = Vec::new();
    for a in Attribute::ALL {
        for (t, &l) in rv.logits[a].iter().enumerate() {
            terms.push(weighted_sum(&mut g, l, &weights[a][t]));
        }
    }
    let mut loss = terms[0];
    for &t in &terms[1..] {
        loss = g.add(loss, t);
    }
    let grads = bound.gradients(&params.store, &g.backward(loss));
    let logits = rv.logits.map(|_, ls| ls.iter().map(|&l| g.value(l).clone()).collect());
    (logits, grads)
}

/// Worst absolute differences `(forward, backward)` between the library with
/// fusion zeroed and the vanilla reference, for one random configuration.
pub fn fusion_ablation_gap(cfg: &ModelConfig, seed: u64, batch: usize, steps: usize) -> (f64, f64) {
    let mut rng: ChaCha8Rng = stream_rng(seed, "fusion-oracle", 0);
    let (mut params, _) = init_params(cfg, seed).expect("valid config");
    params.zero_fusion();
    let xs: Vec<_> = (0..steps).map(|_| uniform(batch, cfg.lyric_dim, 1.0, &mut rng)).collect();
    let targets = PerAttr::from_fn(|a| {
        let k = cfg.branches[a].output_dim;
        (0..steps)
            .map(|_| {
                let rows: Vec<usize> = (0..batch).map(|_| rng.random_range(0..k)).collect();
                one_hot(&rows, k)
            })
            .collect::<Vec<_>>()
    });
    let rse = PerAttr::from_fn(|a| uniform(batch, cfg.rse_dims[a], 1.0, &mut rng));
    let weights = PerAttr::from_fn(|a| {
        (0..steps)
            .map(|_| uniform(batch, cfg.branches[a].output_dim, 1.0, &mut rng))
            .collect::<Vec<_>>()
    });
    let reference = vanilla_stacked_lstm(&params, &xs, &targets, &rse, &weights);
    let (logits, grads) = tape_rollout(&params, &xs, &targets, &rse, &weights);
    let mut fwd = 0.0f64;
    for a in Attribute::ALL {
        for (x, y) in logits[a].iter().zip(&reference.logits[a]) {
            fwd = fwd.max((x - y).iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
    }
    let mut bwd = 0.0f64;
    for (name, g) in &reference.grads {
        bwd = bwd.max((grads.get(name) - g).iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    (fwd, bwd)
}

/// Brute-force BLEU-`max_n` of `hyp` against `refs`: every n-gram is counted
/// by scanning, clipped by its largest count in any single reference.
pub fn brute_bleu(hyp: &[u32], refs: &[&[u32]], max_n: usize) -> f64 {
    let count = |seq: &[u32], gram: &[u32]| seq.windows(gram.len()).filter(|w| *w == gram).count();
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let total = hyp.len().saturating_sub(n - 1);
        let mut matched = 0;
        let mut seen: Vec<&[u32]> = Vec::new();
        for gram in hyp.windows(n) {
            if seen.contains(&gram) {
                continue;
            }
            seen.push(gram);
            let best = refs.iter().map(|r| count(r, gram)).max().unwrap_or(0);
            matched += count(hyp, gram).min(best);
        }
        if n == 1 && matched == 0 {
            return 0.0;
        }
        let num = if matched == 0 { 0.1 } else { matched as f64 };
        log_sum += (num / total.max(1) as f64).ln();
    }
    let c = hyp.len();
    let r = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&l| ((l as i64 - c as i64).abs(), l))
        .unwrap_or(c);
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * (log_sum / max_n as f64).exp()
}

/// Self-BLEU by the definition: each sequence against all the others, averaged.
pub fn brute_self_bleu(corpus: &[Vec<u32>], max_n: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..corpus.len() {
        let refs: Vec<&[u32]> = corpus
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, s)| s.as_slice())
            .collect();
        total += brute_bleu(&corpus[i], &refs, max_n);
    }
    total / corpus.len() as f64
}

/// Hand-built three-sequence corpora with their exact Self-BLEU-2 values
/// worked out by hand.
pub fn hand_built_corpora() -> Vec<(Vec<Vec<u32>>, f64)> {
    // [1,2,3] vs {[1,2,4],[2,3]}: p1 = 3/3, p2 = 2/2 ([1,2] and [2,3] both found), r = 3 → 1
    // [1,2,4] vs {[1,2,3],[2,3]}: p1 = 2/3, p2 = 1/2, r = 3 → sqrt(1/3)
    // [2,3]   vs {[1,2,3],[1,2,4]}: p1 = 2/2, p2 = 1/1, closest r = 3 → exp(1 − 3/2)
    let a = (1.0 + (1.0f64 / 3.0).sqrt() + (-0.5f64).exp()) / 3.0;
    // [5,5,6] vs {[5,6,6],[7]}: p1 = 2/3, p2 = 1/2 → sqrt(1/3)
    // [5,6,6] vs {[5,5,6],[7]}: p1 = 2/3, p2 = 1/2 → sqrt(1/3)
    // [7]     vs the others: no unigram match → 0
    let b = 2.0 * (1.0f64 / 3.0).sqrt() / 3.0;
    vec![
        (vec![vec![1, 2, 3], vec![1, 2, 4], vec![2, 3]], a),
        (vec![vec![5, 5, 6], vec![5, 6, 6], vec![7]], b),
    ]
}

/// A toy-corpus pipeline up to an initialized model.
pub struct ToySetup {
    pub corpus: Vec<conl2m::melody::PairedSample>,
    pub split: conl2m::melody::DatasetSplit,
    pub model: conl2m::model::Model,
    pub train: conl2m::train::TrainingData,
    pub valid: conl2m::train::TrainingData,
}

/// `small` shrinks lyric tables and every layer to width 8 for quick runs;
/// otherwise the published layer sizes are used.
pub fn toy_setup(samples: usize, seed: u64, small: bool) -> conl2m::Result<ToySetup> {
    use conl2m::lyrics::SkipGramConfig;
    use conl2m::melody::split_dataset;
    use conl2m::melody::toy::{toy_corpus, ToyCorpusConfig};
    use conl2m::model::{AssetOptions, Model, ModelAssets};
    use conl2m::train::TrainingData;

    let corpus = toy_corpus(&ToyCorpusConfig::two_regimes(samples, seed))?;
    let split = split_dataset(&corpus, (8, 1, 1), seed)?;
    let mut opts = AssetOptions::default();
    if small {
        let sg = SkipGramConfig {
            dim: 8,
            epochs: 1,
            ..SkipGramConfig::default()
        };
        opts.word_skipgram = sg.clone();
        opts.syllable_skipgram = SkipGramConfig { seed: 1, ..sg };
    }
    let assets = ModelAssets::fit(&corpus, &split.train, &opts)?;
    let mut config = assets.standard_config();
    if small {
        config.branches = config.branches.map(|_, b| BranchConfig {
            embed_dim: 8,
            hidden_dim: 8,
            lstm_units: 8,
            ..*b
        });
        config.discriminator = DiscConfig {
            embed_dims: PerAttr::new(8, 8, 8),
            hidden_dim: 8,
            lstm_units: 8,
        };
    }
    let model = Model::init(&config, assets, seed)?;
    let train = TrainingData::prepare(&split.train, &model.assets)?;
    let valid = TrainingData::prepare(&split.valid, &model.assets)?;
    Ok(ToySetup {
        corpus,
        split,
        model,
        train,
        valid,
    })
}

/// A short schedule for the small toy model.
pub fn quick_config(seed: u64) -> conl2m::train::TrainConfig {
    conl2m::train::TrainConfig {
        pretrain_epochs: 2,
        adversarial_epochs: 2,
        batch_size: 16,
        pretrain_learning_rate: 4e-3,
        validation_samples: 16,
        seed,
        ..conl2m::train::TrainConfig::default()
    }
}
