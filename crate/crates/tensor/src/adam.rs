use crate::error::{Result, TensorError};
use crate::params::ParamStore;

/// Adam with bias correction and decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            step: 0,
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies one update to every trainable entry and clears the gradients.
    ///
    /// Fails without touching any parameter if a trainable entry has no
    /// gradient.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        for id in store.ids().filter(|&id| store.is_trainable(id)) {
            if store.get(id).grad().is_none() {
                return Err(TensorError::MissingGrad(store.name(id).to_string()));
            }
        }
        if self.m.len() != store.len() {
            self.m = store.entries().iter().map(|e| vec![0.0; e.tensor.numel()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let ids: Vec<_> = store.ids().filter(|&id| store.is_trainable(id)).collect();
        for id in ids {
            let tensor = store.get_mut(id);
            let grad = tensor.take_grad().expect("checked above");
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            for (i, p) in tensor.data_mut().iter_mut().enumerate() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
                *p -= self.learning_rate * self.weight_decay * *p;
            }
        }
        Ok(())
    }
}
