//! Sequence-statistics loss and relativistic adversarial losses.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::style::IndexStats;
use crate::tape::{softplus, Graph, Var};

/// `Σ_k k · p_k` of every row, labels `k = 1..=K`.
fn expected_labels(p: &Array2<f64>) -> Vec<f64> {
    p.rows()
        .into_iter()
        .map(|r| r.iter().enumerate().map(|(k, &x)| (k + 1) as f64 * x).sum())
        .collect()
}

/// Mean over steps of the expected class label of a `T × K` distribution sequence.
pub fn seq_mean(probs: &Array2<f64>) -> f64 {
    let e = expected_labels(probs);
    e.iter().sum::<f64>() / e.len().max(1) as f64
}

/// Sample variance (divisor `T − 1`) of the per-step expected labels.
pub fn seq_var(probs: &Array2<f64>) -> Result<f64> {
    let e = expected_labels(probs);
    if e.len() < 2 {
        return Err(Error::SequenceTooShort(e.len()));
    }
    let m = e.iter().sum::<f64>() / e.len() as f64;
    Ok(e.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (e.len() - 1) as f64)
}

/// Batch-mean `α1·(m̂ − m)² + α2·(v̂ − v)²` over sequences of one attribute.
pub fn seqloss(probs: &[Array2<f64>], targets: &[IndexStats], alpha1: f64, alpha2: f64) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::EmptySequence);
    }
    if probs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            what: "sequence loss targets".into(),
            expected: probs.len(),
            found: targets.len(),
        });
    }
    let n = probs.len() as f64;
    let mut mean_term = 0.0;
    let mut var_term = 0.0;
    for (p, t) in probs.iter().zip(targets) {
        mean_term += (seq_mean(p) - t.mean).powi(2);
        var_term += (seq_var(p)? - t.variance).powi(2);
    }
    Ok(alpha1 * mean_term / n + alpha2 * var_term / n)
}

/// Tape version over a batch: `steps[t]` is the `batch × K` distribution of
/// step `t`. Returns a `1 × 1` node.
pub fn seqloss_graph(g: &mut Graph, steps: &[Var], targets: &[IndexStats], alpha1: f64, alpha2: f64) -> Result<Var> {
    let t_len = steps.len();
    if t_len < 2 {
        return Err(Error::SequenceTooShort(t_len));
    }
    let (batch, k) = g.shape(steps[0]);
    if batch == 0 {
        return Err(Error::EmptySequence);
    }
    if targets.len() != batch {
        return Err(Error::DimensionMismatch {
            what: "sequence loss targets".into(),
            expected: batch,
            found: targets.len(),
        });
    }
    let labels = g.constant(Array2::from_shape_fn((k, 1), |(i, _)| (i + 1) as f64));
    let e: Vec<Var> = steps.iter().map(|&p| g.matmul(p, labels)).collect();
    let all = g.concat_cols(&e);
    let sum = g.sum_cols(all);
    let m_hat = g.scale(sum, 1.0 / t_len as f64);
    let m_b = g.broadcast_cols(m_hat, t_len);
    let dev = g.sub(all, m_b);
    let sq = g.square(dev);
    let ss = g.sum_cols(sq);
    let v_hat = g.scale(ss, 1.0 / (t_len - 1) as f64);

    let m = g.constant(Array2::from_shape_fn((batch, 1), |(b, _)| targets[b].mean));
    let v = g.constant(Array2::from_shape_fn((batch, 1), |(b, _)| targets[b].variance));
    let dm = g.sub(m_hat, m);
    let dm = g.square(dm);
    let dm = g.mean_all(dm);
    let dv = g.sub(v_hat, v);
    let dv = g.square(dv);
    let dv = g.mean_all(dv);
    let a = g.scale(dm, alpha1);
    let b = g.scale(dv, alpha2);
    Ok(g.add(a, b))
}

/// `(d_loss, g_loss)` for real and fake logits, each a batch mean of
/// `softplus(−(C(x_r) − C(x_f)))` and `softplus(−(C(x_f) − C(x_r)))`.
///
/// ```
/// use conl2m::train::rsgan_losses;
///
/// let (d, g) = rsgan_losses(&[0.3], &[0.3]).unwrap();
/// assert!((d - std::f64::consts::LN_2).abs() < 1e-12);
/// assert_eq!(d, g);
/// ```
pub fn rsgan_losses(real: &[f64], fake: &[f64]) -> Result<(f64, f64)> {
    if real.is_empty() || real.len() != fake.len() {
        return Err(Error::DimensionMismatch {
            what: "discriminator logits".into(),
            expected: real.len(),
            found: fake.len(),
        });
    }
    if real.iter().chain(fake).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("discriminator logits".into()));
    }
    let n = real.len() as f64;
    let d = real.iter().zip(fake).map(|(r, f)| softplus(-(r - f))).sum::<f64>() / n;
    let g = real.iter().zip(fake).map(|(r, f)| softplus(-(f - r))).sum::<f64>() / n;
    Ok((d, g))
}

/// Tape version of one side: mean `softplus(−(a − b))` over `batch × 1` logits.
/// Pass `(real, fake)` for the discriminator and `(fake, real)` for the generator.
pub fn relativistic_loss_graph(g: &mut Graph, a: Var, b: Var) -> Var {
    let diff = g.sub(b, a);
    let sp = g.softplus(diff);
    g.mean_all(sp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn one_hot(labels: &[usize], k: usize) -> Array2<f64> {
        let mut m = Array2::zeros((labels.len(), k));
        for (t, &l) in labels.iter().enumerate() {
            m[[t, l - 1]] = 1.0;
        }
        m
    }

    #[test]
    fn closed_forms() {
        assert_eq!(seq_mean(&one_hot(&[2, 2, 2], 3)), 2.0);
        assert_eq!(seq_mean(&one_hot(&[1, 3], 3)), 2.0);
        assert_eq!(seq_mean(&Array2::from_elem((4, 3), 1.0 / 3.0)), 2.0);
        assert_eq!(seq_var(&one_hot(&[2, 2, 2], 3)).unwrap(), 0.0);
        assert_eq!(seq_var(&one_hot(&[1, 3], 3)).unwrap(), 2.0);
        assert!(seq_var(&Array2::from_elem((4, 3), 1.0 / 3.0)).unwrap().abs() < 1e-24);
        assert!(seq_var(&one_hot(&[1], 3)).is_err());
    }

    #[test]
    fn seqloss_single_mean_error() {
        // m̂ = 2, v̂ = 0 against m = 1, v = 0
        let p = one_hot(&[2, 2], 3);
        let t = IndexStats { mean: 1.0, variance: 0.0 };
        assert_eq!(seqloss(std::slice::from_ref(&p), &[t], 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(seqloss(&[p], &[t], 2.0, 1.0).unwrap(), 2.0);
    }

    #[test]
    fn graph_matches_plain() {
        let seqs = [
            array![[0.2, 0.5, 0.3], [0.6, 0.1, 0.3], [0.0, 0.0, 1.0]],
            array![[1.0, 0.0, 0.0], [0.3, 0.3, 0.4], [0.5, 0.25, 0.25]],
        ];
        let targets = [
            IndexStats { mean: 2.2, variance: 0.4 },
            IndexStats { mean: 1.1, variance: 0.9 },
        ];
        let plain = seqloss(&seqs, &targets, 0.7, 1.3).unwrap();
        let mut g = Graph::new();
        let steps: Vec<Var> = (0..3)
            .map(|t| g.constant(Array2::from_shape_fn((2, 3), |(b, k)| seqs[b][[t, k]])))
            .collect();
        let l = seqloss_graph(&mut g, &steps, &targets, 0.7, 1.3).unwrap();
        assert!((g.scalar(l) - plain).abs() < 1e-12);
    }

    #[test]
    fn rsgan_closed_forms() {
        let (d, g) = rsgan_losses(&[20.0], &[0.0]).unwrap();
        assert!((d - 2.061153618190204e-9).abs() < 1e-15);
        assert!((g - 20.000000002061153).abs() < 1e-9);
        let (d2, g2) = rsgan_losses(&[0.0], &[20.0]).unwrap();
        assert_eq!((d, g), (g2, d2));
        assert!(rsgan_losses(&[], &[]).is_err());
    }
}
