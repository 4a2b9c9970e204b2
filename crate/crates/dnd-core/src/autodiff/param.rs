//! Named trainable parameters and their gradient store.

use super::tensor::Tensor;
use super::{AdResult, Gradients, Tape, VarId};
use crate::real::Real;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

/// Index of a parameter within its [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub usize);

/// A named array with a position in the layer hierarchy (for layer-wise
/// learning-rate decay; embeddings sit at index 0, the output head at the
/// model's layer count).
#[derive(Debug, Clone)]
pub struct Parameter<F> {
    pub name: String,
    pub layer_index: usize,
    pub value: Tensor<F>,
}

/// Ordered collection of a model's parameters. Names are unique.
#[derive(Debug, Clone)]
pub struct ParamSet<F> {
    params: Vec<Parameter<F>>,
}

impl<F: Real> Default for ParamSet<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> ParamSet<F> {
    pub fn new() -> Self {
        ParamSet { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, layer_index: usize, value: Tensor<F>) -> ParamId {
        let name = name.into();
        assert!(
            self.find(&name).is_none(),
            "duplicate parameter name {name}"
        );
        self.params.push(Parameter {
            name,
            layer_index,
            value,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<F> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<F> {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<F>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn max_layer_index(&self) -> usize {
        self.params.iter().map(|p| p.layer_index).max().unwrap_or(0)
    }

    pub fn total_values(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Insert every parameter value into a tape. With `trainable = false`
    /// the bound leaves are frozen: the backward pass writes no gradients
    /// into them.
    pub fn bind(&self, tape: &mut Tape<F>, trainable: bool) -> BoundParams {
        let ids = self
            .params
            .iter()
            .map(|p| tape.input(p.value.clone(), trainable))
            .collect();
        BoundParams { ids }
    }

    /// Pull this set's gradients out of a finished backward pass.
    pub fn collect_grads(&self, bound: &BoundParams, grads: &mut Gradients<F>, store: &mut GradStore<F>) {
        for (i, &vid) in bound.ids.iter().enumerate() {
            if let Some(g) = grads.take(vid) {
                store.accumulate(ParamId(i), &g);
            }
        }
    }
}

/// Tape handles for one bound copy of a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct BoundParams {
    ids: Vec<VarId>,
}

impl BoundParams {
    /// Wrap externally inserted leaves (grad-check harnesses build these).
    pub fn from_vars(ids: Vec<VarId>) -> Self {
        BoundParams { ids }
    }

    pub fn var(&self, id: ParamId) -> VarId {
        self.ids[id.0]
    }

    pub fn vars(&self) -> &[VarId] {
        &self.ids
    }
}

/// Per-parameter gradient accumulator. Cleared explicitly before each
/// optimizer step.
#[derive(Debug, Clone)]
pub struct GradStore<F> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Real> GradStore<F> {
    pub fn for_params(params: &ParamSet<F>) -> Self {
        GradStore {
            grads: vec![None; params.len()],
        }
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    pub fn accumulate(&mut self, id: ParamId, delta: &Tensor<F>) {
        match &mut self.grads[id.0] {
            Some(g) => g.accumulate(delta),
            slot @ None => *slot = Some(delta.clone()),
        }
    }

    pub fn scale_all(&mut self, factor: F) {
        for g in self.grads.iter_mut().flatten() {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor<F>> {
        self.grads[id.0].as_ref()
    }

    pub fn is_all_empty(&self) -> bool {
        self.grads.iter().all(|g| g.is_none())
    }

    pub fn validate_finite(&self) -> AdResult<()> {
        for (i, g) in self.grads.iter().enumerate() {
            if let Some(g) = g {
                g.validate_finite(&format!("gradient of parameter {i}"))?;
            }
        }
        Ok(())
    }
}

// ── initializers ────────────────────────────────────────────────────

/// Xavier/Glorot uniform init for a (fan_in, fan_out) weight matrix.
pub fn xavier_uniform<F: Real>(rng: &mut ChaCha20Rng, fan_in: usize, fan_out: usize) -> Tensor<F> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| F::from_f64(rng.gen_range(-bound..bound)))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("sized")
}

/// Gaussian init with the given standard deviation.
pub fn normal_init<F: Real>(rng: &mut ChaCha20Rng, shape: Vec<usize>, std: f64) -> Tensor<F> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            F::from_f64(z * std)
        })
        .collect();
    Tensor::new(shape, data).expect("sized")
}

pub fn zeros_init<F: Real>(shape: Vec<usize>) -> Tensor<F> {
    Tensor::zeros(shape)
}

pub fn ones_init<F: Real>(len: usize) -> Tensor<F> {
    Tensor::vector(vec![F::one(); len])
}
