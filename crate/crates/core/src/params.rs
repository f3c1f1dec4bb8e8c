//! Named parameter tensors and the SGD-with-momentum optimizer.

use crate::tensor::{Gradients, Tape, Var};
use ndarray::ArrayD;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// All learnable tensors of a model, keyed by a stable `module/name` path.
/// The map is ordered so iteration (and thus updates, checkpoints, digests)
/// is deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    map: BTreeMap<String, ArrayD<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: ArrayD<f64>) {
        self.map.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> &ArrayD<f64> {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut ArrayD<f64> {
        self.map
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ArrayD<f64>)> {
        self.map.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Leafs every parameter onto `tape`, returning the name -> Var binding
    /// used to pull gradients back out after the backward pass.
    pub fn bind(&self, tape: &mut Tape) -> Binding {
        let mut vars = BTreeMap::new();
        for (name, value) in &self.map {
            vars.insert(name.clone(), tape.leaf(value.clone()));
        }
        Binding { vars }
    }
}

/// Name -> tape-variable mapping for one forward pass.
pub struct Binding {
    vars: BTreeMap<String, Var>,
}

impl Binding {
    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} not bound"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

/// Classical SGD with momentum: `v <- mu*v + g`, `p <- p - lr*v`.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: BTreeMap<String, ArrayD<f64>>,
}

impl SgdMomentum {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        Self {
            learning_rate,
            momentum,
            velocity: BTreeMap::new(),
        }
    }

    /// Applies one update step from the gradients bound on `binding`.
    /// Parameters that received no gradient this step are left untouched
    /// (their velocity still decays).
    pub fn step(
        &mut self,
        params: &mut ParamStore,
        binding: &Binding,
        tape: &Tape,
        grads: &Gradients,
    ) {
        for (name, var) in binding.iter() {
            let g = grads.get_or_zeros(*var, tape);
            let v = self
                .velocity
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            v.zip_mut_with(&g, |vi, gi| *vi = *vi * self.momentum + *gi);
            let lr = self.learning_rate;
            params
                .get_mut(name)
                .zip_mut_with(v, |p, vi| *p -= lr * *vi);
        }
    }
}

/// Uniform init in `[-bound, bound]` with `bound = sqrt(1 / fan_in)`, the
/// usual conv/linear default.
pub fn uniform_fan_in(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> ArrayD<f64> {
    let bound = (1.0 / fan_in as f64).sqrt();
    let mut out = ArrayD::<f64>::zeros(ndarray::IxDyn(shape));
    for v in out.iter_mut() {
        *v = rng.random_range(-bound..bound);
    }
    out
}
