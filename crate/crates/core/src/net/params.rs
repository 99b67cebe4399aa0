use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{Gradients, Graph, Var};

/// Named parameter tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    tensors: BTreeMap<String, Array2<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array2<f64>) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> &Array2<f64> {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("no parameter named {name:?}"))
    }

    pub fn try_get(&self, name: &str) -> Option<&Array2<f64>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Array2<f64> {
        self.tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("no parameter named {name:?}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Array2<f64>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn size(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Name of the first tensor holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.iter()
            .find(|(_, t)| t.iter().any(|x| !x.is_finite()))
            .map(|(n, _)| n)
    }

    /// Every tensor as a leaf of `g`.
    pub fn bind(&self, g: &mut Graph) -> BoundParams {
        BoundParams {
            vars: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), g.leaf(v.clone())))
                .collect(),
        }
    }

    /// Every tensor as a constant of `g` (no gradients).
    pub fn bind_frozen(&self, g: &mut Graph) -> BoundParams {
        BoundParams {
            vars: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), g.constant(v.clone())))
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> ParamStore {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Array2::zeros(v.dim())))
                .collect(),
        }
    }

    /// Checks names and shapes against `other`.
    pub fn check_layout(&self, other: &ParamStore, what: &str) -> Result<()> {
        for (name, t) in &other.tensors {
            match self.tensors.get(name) {
                None => return Err(Error::InvalidConfig(format!("{what}: missing parameter {name}"))),
                Some(mine) if mine.dim() != t.dim() => {
                    return Err(Error::DimensionMismatch {
                        what: format!("{what} parameter {name}"),
                        expected: t.len(),
                        found: mine.len(),
                    })
                }
                _ => {}
            }
        }
        if self.len() != other.len() {
            return Err(Error::InvalidConfig(format!(
                "{what}: {} parameters, expected {}",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }
}

/// Graph handles of a [`ParamStore`]'s tensors.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name:?} is not bound"))
    }

    /// Gradients of every bound tensor, zeros where the loss did not reach.
    pub fn gradients(&self, store: &ParamStore, grads: &Gradients) -> ParamStore {
        ParamStore {
            tensors: self
                .vars
                .iter()
                .map(|(k, &v)| (k.clone(), grads.get_or_zeros(v, store.get(k).dim())))
                .collect(),
        }
    }
}

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .map(|(_, t)| t.iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let k = max_norm / norm;
        for (_, t) in grads.iter_mut() {
            t.mapv_inplace(|x| x * k);
        }
    }
    norm
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.99,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter store.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: ParamStore,
    pub v: ParamStore,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        AdamState {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// One bias-corrected Adam update.
    pub fn update(&mut self, params: &mut ParamStore, grads: &ParamStore, cfg: &AdamConfig) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (name, p) in params.iter_mut() {
            let g = grads.get(name);
            let m = self.m.get_mut(name);
            ndarray::Zip::from(&mut *m)
                .and(g)
                .for_each(|m, &g| *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g);
            let v = self.v.get_mut(name);
            ndarray::Zip::from(&mut *v)
                .and(g)
                .for_each(|v, &g| *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g);
            let m = self.m.get(name);
            let v = self.v.get(name);
            ndarray::Zip::from(p).and(m).and(v).for_each(|p, &m, &v| {
                *p -= cfg.learning_rate * (m / c1) / ((v / c2).sqrt() + cfg.epsilon);
            });
        }
    }
}

/// Uniform(−a, a) with a = sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let a = (6.0 / (rows + cols).max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-a..a))
}

/// A matrix with orthonormal columns (or rows, when wider than tall), by
/// Gram-Schmidt on Gaussian samples.
pub fn orthogonal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let (n, k) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let mut q = Array2::<f64>::zeros((n, k));
    for j in 0..k {
        loop {
            let mut v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            for prev in 0..j {
                let dot: f64 = (0..n).map(|i| v[i] * q[[i, prev]]).sum();
                for (i, x) in v.iter_mut().enumerate() {
                    *x -= dot * q[[i, prev]];
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                for i in 0..n {
                    q[[i, j]] = v[i] / norm;
                }
                break;
            }
        }
    }
    if rows >= cols {
        q
    } else {
        q.reversed_axes().as_standard_layout().to_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use ndarray::array;

    #[test]
    fn orthogonal_columns_are_orthonormal() {
        let mut rng = stream_rng(1, "t", 0);
        for (r, c) in [(6, 6), (8, 3), (3, 8)] {
            let q = orthogonal(r, c, &mut rng);
            assert_eq!(q.dim(), (r, c));
            let gram = if r >= c { q.t().dot(&q) } else { q.dot(&q.t()) };
            for i in 0..gram.nrows() {
                for j in 0..gram.ncols() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[[i, j]] - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn clipping_bounds_the_global_norm() {
        let mut g = ParamStore::new();
        g.insert("a", array![[3.0, 4.0]]);
        g.insert("b", array![[12.0]]);
        let before = clip_global_norm(&mut g, 5.0);
        assert_eq!(before, 13.0);
        let after: f64 = g.iter().map(|(_, t)| t.iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt();
        assert!(after <= 5.0 + 1e-9);
        let mut small = ParamStore::new();
        small.insert("a", array![[0.3]]);
        clip_global_norm(&mut small, 5.0);
        assert_eq!(small.get("a")[[0, 0]], 0.3);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut p = ParamStore::new();
        p.insert("w", array![[1.0, -1.0]]);
        let mut g = ParamStore::new();
        g.insert("w", array![[0.5, -2.0]]);
        let mut st = AdamState::new(&p);
        st.update(&mut p, &g, &AdamConfig::with_lr(0.1));
        // bias-corrected m/sqrt(v) = sign(g) on the first step
        assert!((p.get("w")[[0, 0]] - 0.9).abs() < 1e-6);
        assert!((p.get("w")[[0, 1]] + 0.9).abs() < 1e-6);
    }
}
