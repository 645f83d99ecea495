use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::params::{ParamId, ParamStore, StatUpdate, StepOutput};
use crate::tape::{BatchStats, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// One forward (and optionally backward) pass over a [`ParamStore`].
///
/// Parameters are bound onto the tape lazily. In train mode they are
/// recorded as variables; in eval mode as constants, so no gradient
/// bookkeeping happens. Dropout masks come from a per-pass seeded RNG.
pub struct Graph<'s> {
    pub tape: Tape,
    store: &'s ParamStore,
    bound: Vec<Option<Var>>,
    mode: Mode,
    rng: ChaCha8Rng,
    stats: Vec<StatUpdate>,
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore, mode: Mode, seed: u64) -> Self {
        Self {
            tape: Tape::new(),
            store,
            bound: vec![None; store.len()],
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
            stats: Vec::new(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn is_train(&self) -> bool {
        self.mode == Mode::Train
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.index()] {
            return v;
        }
        let t = self.store.get(id).clone();
        let v = if self.is_train() && self.store.is_trainable(id) {
            self.tape.variable(t)
        } else {
            self.tape.constant(t)
        };
        self.bound[id.index()] = Some(v);
        v
    }

    /// Train-mode dropout drawing its mask from this pass's RNG.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        self.tape.dropout(x, rate, &mut self.rng)
    }

    pub(crate) fn record_stats(&mut self, mean: ParamId, var: ParamId, momentum: f64, stats: BatchStats) {
        self.stats.push(StatUpdate { mean, var, momentum, stats });
    }

    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.tape.backward(loss)
    }

    /// Collects gradients of every bound trainable parameter (zeros when the
    /// loss did not depend on it) and pending running-stat updates.
    pub fn finish(self) -> Result<StepOutput> {
        let mut grads = Vec::new();
        if self.tape.has_run_backward() {
            for (i, v) in self.bound.iter().enumerate() {
                let Some(v) = v else { continue };
                let id = ParamId(i);
                if !self.store.is_trainable(id) {
                    continue;
                }
                let g = match self.tape.grad(*v)? {
                    Some(g) => g.to_vec(),
                    None => vec![0.0; self.store.get(id).numel()],
                };
                grads.push((id, g));
            }
        }
        Ok(StepOutput { grads, stats: self.stats })
    }
}
