use std::collections::HashMap;

use ndarray::Array4;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{GavnError, Result};

/// Index of a parameter inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// A named, trainable array with a gradient buffer of identical shape.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub data: Array4<f64>,
    pub grad: Array4<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Zero-mean normal with variance `2 / fan_in`.
    He,
    Zeros,
}

/// Rounds to the nearest `f32`. Parameters and optimizer moments live on the
/// `f32` lattice so checkpoints store them losslessly.
#[inline]
pub fn to_f32_lattice(v: f64) -> f64 {
    v as f32 as f64
}

/// Ordered collection of uniquely named parameters.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, ParamId>,
    frozen: Vec<bool>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, data: Array4<f64>) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(GavnError::InvalidArgument(format!("duplicate parameter name `{name}`")));
        }
        let id = ParamId(self.params.len());
        let grad = Array4::zeros(data.raw_dim());
        self.by_name.insert(name.clone(), id);
        self.params.push(Param { name, data, grad });
        self.frozen.push(false);
        Ok(id)
    }

    /// Creates a parameter of `shape` initialized per `init`; `fan_in` sets the He scale.
    pub fn create<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: (usize, usize, usize, usize),
        fan_in: usize,
        init: Init,
        rng: &mut R,
    ) -> Result<ParamId> {
        let data = match init {
            Init::Zeros => Array4::zeros(shape),
            Init::He => {
                let std = (2.0 / fan_in.max(1) as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive std");
                Array4::from_shape_simple_fn(shape, || to_f32_lattice(normal.sample(rng)))
            }
        };
        self.insert(name, data)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Ids of parameters whose name starts with any of `prefixes`.
    pub fn ids_with_prefix(&self, prefixes: &[&str]) -> Vec<ParamId> {
        self.iter()
            .filter(|(_, p)| prefixes.iter().any(|pre| p.name.starts_with(pre)))
            .map(|(id, _)| id)
            .collect()
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.frozen[id.0]
    }

    /// Freezes everything, then unfreezes the parameters under `prefixes`.
    pub fn train_only(&mut self, prefixes: &[&str]) {
        for (i, p) in self.params.iter().enumerate() {
            self.frozen[i] = !prefixes.iter().any(|pre| p.name.starts_with(pre));
        }
    }

    pub fn unfreeze_all(&mut self) {
        self.frozen.iter_mut().for_each(|f| *f = false);
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// Sets every parameter under `prefix` to zero.
    pub fn zero_prefix(&mut self, prefix: &str) {
        for p in &mut self.params {
            if p.name.starts_with(prefix) {
                p.data.fill(0.0);
            }
        }
    }

    /// Copies data for every name present in both stores; shapes must agree.
    pub fn copy_from(&mut self, other: &ParamStore) -> Result<usize> {
        let mut copied = 0;
        for p in &mut self.params {
            if let Some(src) = other.by_name(&p.name) {
                if src.data.dim() != p.data.dim() {
                    return Err(GavnError::Shape(format!(
                        "parameter `{}`: {:?} vs {:?}",
                        p.name,
                        p.data.dim(),
                        src.data.dim()
                    )));
                }
                p.data.assign(&src.data);
                copied += 1;
            }
        }
        Ok(copied)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_duplicate_names() {
        let mut s = ParamStore::new();
        s.insert("a", Array4::zeros((1, 1, 1, 1))).unwrap();
        assert!(s.insert("a", Array4::zeros((1, 1, 1, 1))).is_err());
    }

    #[test]
    fn he_init_is_on_f32_lattice_and_scaled() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = ParamStore::new();
        let id = s.create("w", (64, 16, 3, 3), 144, Init::He, &mut rng).unwrap();
        let d = &s.get(id).data;
        assert!(d.iter().all(|&v| v == to_f32_lattice(v)));
        let var = d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64;
        assert!((var - 2.0 / 144.0).abs() < 0.2 * 2.0 / 144.0);
        assert_eq!(s.get(id).grad.dim(), d.dim());
    }

    #[test]
    fn train_only_freezes_other_prefixes() {
        let mut s = ParamStore::new();
        let a = s.insert("temporal.x", Array4::zeros((1, 1, 1, 1))).unwrap();
        let b = s.insert("identity.y", Array4::zeros((1, 1, 1, 1))).unwrap();
        s.train_only(&["identity."]);
        assert!(s.is_frozen(a));
        assert!(!s.is_frozen(b));
    }
}
