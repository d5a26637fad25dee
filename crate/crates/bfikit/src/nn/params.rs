//! Persistent parameter storage and the optimizer.

use super::{Graph, NnError, Tensor};

/// Handle to one named array in [`Parameters`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// One named, shaped array of 64-bit values.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Model state that outlives any single tape: trainable weights plus
/// frozen companions such as feature normalizer statistics.
///
/// Entries keep insertion order, which fixes the checkpoint layout and the
/// optimizer's update order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Parameters {
    entries: Vec<ParamEntry>,
}

impl Parameters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        values: Vec<f64>,
    ) -> Result<ParamId, NnError> {
        let name = name.into();
        if self.entries.iter().any(|e| e.name == name) {
            return Err(NnError::DuplicateParam(name));
        }
        if shape.iter().product::<usize>() != values.len() {
            return Err(NnError::ShapeMismatch(format!(
                "parameter {name}: shape {:?} vs {} values",
                shape,
                values.len()
            )));
        }
        self.entries.push(ParamEntry {
            name,
            shape: shape.to_vec(),
            values,
        });
        Ok(ParamId(self.entries.len() - 1))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn values_mut(&mut self, id: ParamId) -> &mut Vec<f64> {
        &mut self.entries[id.0].values
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamEntry> {
        self.entries.iter()
    }

    /// Copies the entry into a graph as a leaf tensor.
    pub fn leaf(&self, graph: &mut Graph, id: ParamId) -> Result<Tensor, NnError> {
        let entry = &self.entries[id.0];
        graph.leaf(&entry.shape, entry.values.clone())
    }

    /// Total value count across entries.
    pub fn value_count(&self) -> usize {
        self.entries.iter().map(|e| e.values.len()).sum()
    }
}

/// The learnable per-task log-variances of the multi-task combination.
#[derive(Debug, Clone, Copy)]
pub struct UncertaintyWeights {
    pub id: ParamId,
    pub n_tasks: usize,
}

impl UncertaintyWeights {
    /// Registers `n_tasks` log-variances, initialized to zero so every task
    /// starts with unit weight.
    pub fn new(
        params: &mut Parameters,
        name: impl Into<String>,
        n_tasks: usize,
    ) -> Result<Self, NnError> {
        let id = params.push(name, &[n_tasks], vec![0.0; n_tasks])?;
        Ok(Self { id, n_tasks })
    }
}

/// Adaptive-moment optimizer with decoupled weight decay.
///
/// A step with all-zero gradients moves each parameter by exactly
/// `-lr * weight_decay * value`: the decay path never touches the moment
/// estimates.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Default for AdamW {
    fn default() -> Self {
        Self::new(1e-3, 0.9, 0.999, 1e-8, 1e-4)
    }
}

impl AdamW {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to every `(parameter, gradient)` pair. Moment
    /// state is kept per parameter id, so the same optimizer must stay with
    /// the same [`Parameters`].
    pub fn step(
        &mut self,
        params: &mut Parameters,
        grads: &[(ParamId, Vec<f64>)],
    ) -> Result<(), NnError> {
        self.step += 1;
        let bias1 = 1.0 - self.beta1.powi(self.step as i32);
        let bias2 = 1.0 - self.beta2.powi(self.step as i32);
        for (id, grad) in grads {
            let values = params.values_mut(*id);
            if grad.len() != values.len() {
                return Err(NnError::ShapeMismatch(format!(
                    "gradient of {} values for a parameter of {}",
                    grad.len(),
                    values.len()
                )));
            }
            if self.first.len() <= id.0 {
                self.first.resize(id.0 + 1, Vec::new());
                self.second.resize(id.0 + 1, Vec::new());
            }
            if self.first[id.0].len() != values.len() {
                self.first[id.0] = vec![0.0; values.len()];
                self.second[id.0] = vec![0.0; values.len()];
            }
            let m = &mut self.first[id.0];
            let v = &mut self.second[id.0];
            for i in 0..values.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grad[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                let update = m_hat / (v_hat.sqrt() + self.eps);
                values[i] -= self.lr * (update + self.weight_decay * values[i]);
            }
        }
        Ok(())
    }
}
