use crate::error::{Result, TensorError};
use crate::tape::BatchStats;
use crate::tensor::Tensor;

/// Index of an entry in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub tensor: Tensor,
    /// Buffers (batch-norm running statistics) are stored alongside
    /// parameters but are neither optimized nor counted.
    pub trainable: bool,
}

/// Owns every learnable tensor and buffer of a model.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

/// Running-statistic update produced by a train-mode batch-norm forward.
#[derive(Debug, Clone)]
pub struct StatUpdate {
    pub mean: ParamId,
    pub var: ParamId,
    pub momentum: f64,
    pub stats: BatchStats,
}

/// Everything a training forward/backward produced for the store.
#[derive(Debug, Default)]
pub struct StepOutput {
    pub grads: Vec<(ParamId, Vec<f64>)>,
    pub stats: Vec<StatUpdate>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, name: impl Into<String>, tensor: Tensor, trainable: bool) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter name {name}");
        self.entries.push(ParamEntry {
            name,
            tensor: tensor.with_requires_grad(trainable),
            trainable,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn add_param(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.push(name, tensor, true)
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.push(name, tensor, false)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].tensor
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    /// Number of trainable scalars; buffers are excluded.
    pub fn param_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.tensor.numel())
            .sum()
    }

    pub fn clear_grads(&mut self) {
        self.entries.iter_mut().for_each(|e| e.tensor.clear_grad());
    }

    /// Replaces the values of an entry, keeping its shape.
    pub fn set_values(&mut self, id: ParamId, values: &[f64]) -> Result<()> {
        let t = &mut self.entries[id.0].tensor;
        if values.len() != t.numel() {
            return Err(TensorError::Shape {
                op: "ParamStore::set_values",
                detail: format!("{} values for {:?}", values.len(), t.shape()),
            });
        }
        t.data_mut().copy_from_slice(values);
        Ok(())
    }

    /// Stores gradients and folds batch statistics into running buffers.
    ///
    /// Running variance is updated with the unbiased batch variance.
    pub fn apply(&mut self, out: StepOutput) -> Result<()> {
        for (id, g) in out.grads {
            self.entries[id.0].tensor.set_grad(g)?;
        }
        for u in out.stats {
            let n = u.stats.count as f64;
            let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
            let m = u.momentum;
            let mean = self.entries[u.mean.0].tensor.data_mut();
            for (r, b) in mean.iter_mut().zip(&u.stats.mean) {
                *r = (1.0 - m) * *r + m * b;
            }
            let var = self.entries[u.var.0].tensor.data_mut();
            for (r, b) in var.iter_mut().zip(&u.stats.var) {
                *r = (1.0 - m) * *r + m * b * unbias;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buffers_are_not_counted() {
        let mut s = ParamStore::new();
        s.add_param("w", Tensor::zeros(&[3, 4]));
        s.add_buffer("running_mean", Tensor::zeros(&[4]));
        assert_eq!(s.param_count(), 12);
        assert_eq!(s.len(), 2);
        assert!(s.find("running_mean").is_some());
    }

    #[test]
    fn running_stats_use_momentum() {
        let mut s = ParamStore::new();
        let mean = s.add_buffer("m", Tensor::zeros(&[1]));
        let var = s.add_buffer("v", Tensor::full(&[1], 1.0));
        s.apply(StepOutput {
            grads: vec![],
            stats: vec![StatUpdate {
                mean,
                var,
                momentum: 0.1,
                stats: BatchStats { mean: vec![2.0], var: vec![1.0], count: 2 },
            }],
        })
        .unwrap();
        assert!((s.get(mean).item() - 0.2).abs() < 1e-15);
        assert!((s.get(var).item() - (0.9 + 0.1 * 2.0)).abs() < 1e-15);
    }
}
