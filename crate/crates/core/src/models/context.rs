use ltssl_autodiff::{BatchStats, ParamId, ParamKind, ParamStore, Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Weight of the previous running statistic in each batch-norm update.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, dropout active, gradients tracked.
    Train,
    /// Running statistics, no dropout, no gradients.
    Eval,
}

/// Batch-norm buffers of one layer, as parameter ids.
#[derive(Clone, Copy, Debug)]
pub struct BnBuffers {
    pub mean: ParamId,
    pub var: ParamId,
    pub updates: ParamId,
}

#[derive(Clone, Debug)]
pub struct BnUpdate {
    pub buffers: BnBuffers,
    pub stats: BatchStats,
}

/// One forward pass: a tape plus the bindings of store parameters onto it.
pub struct Ctx<'s> {
    pub tape: Tape,
    store: &'s ParamStore,
    bound: Vec<Option<Var>>,
    mode: Mode,
    bn_updates: Vec<BnUpdate>,
    dropout_rng: Option<ChaCha8Rng>,
}

impl<'s> Ctx<'s> {
    pub fn new(store: &'s ParamStore, mode: Mode) -> Self {
        Self::with_tape(Tape::new(), store, mode)
    }

    pub fn with_tape(tape: Tape, store: &'s ParamStore, mode: Mode) -> Self {
        Ctx {
            tape,
            store,
            bound: vec![None; store.len()],
            mode,
            bn_updates: Vec::new(),
            dropout_rng: None,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    /// Enables dropout masks drawn from `rng` (train mode only).
    pub fn with_dropout_rng(mut self, rng: ChaCha8Rng) -> Self {
        self.dropout_rng = Some(rng);
        self
    }

    /// Forces parameter `id` to be read from `var` instead of the store.
    pub fn bind(&mut self, id: ParamId, var: Var) {
        self.bound[id.index()] = Some(var);
    }

    /// Tape variable for parameter `id`, created on first use. Trainable
    /// parameters become gradient leaves in train mode.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.index()] {
            return v;
        }
        let p = self.store.get(id);
        let v = if self.mode == Mode::Train && p.kind == ParamKind::Trainable {
            self.tape.leaf(p.value.clone())
        } else {
            self.tape.constant(p.value.clone())
        };
        self.bound[id.index()] = Some(v);
        v
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.tape.constant(value)
    }

    /// Batch norm: batch statistics in train mode (recorded for the running
    /// update), running statistics in eval mode.
    pub fn batch_norm(&mut self, x: Var, gamma: ParamId, beta: ParamId, buffers: BnBuffers) -> Result<Var> {
        let (g, b) = (self.param(gamma), self.param(beta));
        match self.mode {
            Mode::Train => {
                let (y, stats) = self.tape.batch_norm_train(x, g, b)?;
                self.bn_updates.push(BnUpdate { buffers, stats });
                Ok(y)
            }
            Mode::Eval => {
                if self.store.value(buffers.updates).item() == 0.0 {
                    return Err(Error::NoRunningStats(self.store.get(buffers.mean).name.clone()));
                }
                let stats = BatchStats {
                    mean: self.store.value(buffers.mean).data().to_vec(),
                    var: self.store.value(buffers.var).data().to_vec(),
                };
                Ok(self.tape.batch_norm_eval(x, g, b, &stats)?)
            }
        }
    }

    /// Inverted dropout with drop probability `p`.
    pub fn dropout(&mut self, x: Var, p: f64) -> Result<Var> {
        if self.mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        let rng = self
            .dropout_rng
            .as_mut()
            .ok_or_else(|| Error::Config("dropout in train mode needs a seeded generator".into()))?;
        let keep = 1.0 - p;
        let n = self.tape.value(x).len();
        let mask = (0..n)
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        Ok(self.tape.scale(x, mask)?)
    }

    /// Gradients of the given parameters after `tape.backward`; parameters
    /// that did not take part in the pass get zeros.
    pub fn param_grads(&self, ids: &[ParamId]) -> Vec<Vec<f64>> {
        ids.iter()
            .map(|&id| {
                self.bound[id.index()]
                    .and_then(|v| self.tape.grad(v))
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; self.store.value(id).len()])
            })
            .collect()
    }

    pub fn into_parts(self) -> (Tape, Vec<BnUpdate>) {
        (self.tape, self.bn_updates)
    }
}

/// Folds recorded batch statistics into the running buffers. The first
/// update of a layer copies the batch statistics outright.
pub fn apply_bn_updates(store: &mut ParamStore, updates: &[BnUpdate]) {
    for u in updates {
        let count = store.value(u.buffers.updates).item();
        let blend = |old: &mut [f64], new: &[f64]| {
            for (o, n) in old.iter_mut().zip(new) {
                *o = if count == 0.0 { *n } else { BN_MOMENTUM * *o + (1.0 - BN_MOMENTUM) * n };
            }
        };
        blend(store.value_mut(u.buffers.mean).data_mut(), &u.stats.mean);
        blend(store.value_mut(u.buffers.var).data_mut(), &u.stats.var);
        store.value_mut(u.buffers.updates).data_mut()[0] = count + 1.0;
    }
}
