//! Gumbel-softmax with a straight-through hard sample.

use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{softmax_rows, Graph, Var};

/// How the temperature enters the relaxed sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureConvention {
    /// `softmax((o + g) / τ)`.
    #[default]
    Divide,
    /// `softmax(τ · (o + g))`, with τ read as an inverse temperature.
    Multiply,
}

impl TemperatureConvention {
    fn scale(self, tau: f64) -> f64 {
        match self {
            TemperatureConvention::Divide => 1.0 / tau,
            TemperatureConvention::Multiply => tau,
        }
    }
}

/// I.i.d. Gumbel(0, 1) samples.
pub fn gumbel_noise(shape: (usize, usize), rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || {
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        -(-u.ln()).ln()
    })
}

/// Row-wise one-hot of the maximum; ties go to the lowest index.
pub fn argmax_one_hot(m: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(m.dim());
    for (r, row) in m.axis_iter(Axis(0)).enumerate() {
        let mut best = 0;
        for (j, &x) in row.iter().enumerate() {
            if x > row[best] {
                best = j;
            }
        }
        if !row.is_empty() {
            out[[r, best]] = 1.0;
        }
    }
    out
}

/// Relaxed and hard samples for explicit noise `g`.
pub fn gumbel_softmax_with_noise(
    logits: &Array2<f64>,
    noise: &Array2<f64>,
    temperature: f64,
    convention: TemperatureConvention,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidConfig(format!("temperature {temperature}")));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let soft = softmax_rows(&((logits + noise) * convention.scale(temperature)));
    let hard = argmax_one_hot(&soft);
    Ok((soft, hard))
}

/// `soft = softmax((logits + g) / τ)` with fresh Gumbel noise, and
/// `hard = onehot(argmax(soft))`.
///
/// ```
/// use conl2m::rng::stream_rng;
/// use conl2m::train::gumbel_softmax_st;
/// use ndarray::array;
///
/// let mut rng = stream_rng(0, "doc", 0);
/// let (soft, hard) = gumbel_softmax_st(&array![[2.0, 1.0, 0.0]], 1.0, &mut rng).unwrap();
/// assert!((soft.sum() - 1.0).abs() < 1e-12);
/// assert_eq!(hard.sum(), 1.0);
/// ```
pub fn gumbel_softmax_st(
    logits: &Array2<f64>,
    temperature: f64,
    rng: &mut impl Rng,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let noise = gumbel_noise(logits.dim(), rng);
    gumbel_softmax_with_noise(logits, &noise, temperature, TemperatureConvention::Divide)
}

/// Tape version: returns `(soft, hard)` where `hard` carries the one-hot
/// forward value and passes its gradient to `soft`.
pub fn gumbel_softmax_graph(
    g: &mut Graph,
    logits: Var,
    noise: Array2<f64>,
    temperature: f64,
    convention: TemperatureConvention,
) -> (Var, Var) {
    let n = g.constant(noise);
    let z = g.add(logits, n);
    let z = g.scale(z, convention.scale(temperature));
    let soft = g.softmax_rows(z);
    let hard = argmax_one_hot(g.value(soft));
    let st = g.straight_through(hard, soft);
    (soft, st)
}

/// Exponential anneal from 1 at the first adversarial epoch to `max` at the last.
pub fn temperature_schedule(epoch: usize, total_epochs: usize, max: f64) -> f64 {
    if total_epochs <= 1 {
        return 1.0;
    }
    let frac = epoch.min(total_epochs - 1) as f64 / (total_epochs - 1) as f64;
    max.powf(frac)
}
