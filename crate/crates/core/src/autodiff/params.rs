use std::collections::HashMap;

use rand::Rng;

use super::{AutodiffError, CheckpointEntry, Gradients, Tape, Tensor, Var};

/// Handle of one tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered, named collection of trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    lookup: HashMap<String, usize>,
}

/// Uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor. Panics on a duplicate name, which is a
    /// construction bug rather than a runtime condition.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.lookup.contains_key(&name), "duplicate parameter {}", name);
        self.lookup.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.values.push(value);
        ParamId(self.names.len() - 1)
    }

    /// Glorot-uniform `[fan_in, fan_out]` matrix.
    pub fn add_glorot<R: Rng + ?Sized>(&mut self, name: impl Into<String>, fan_in: usize, fan_out: usize, rng: &mut R) -> ParamId {
        let t = Tensor::uniform(&[fan_in, fan_out], glorot_bound(fan_in, fan_out), rng);
        self.add(name, t)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// Sets every tensor to zero.
    pub fn zero_all(&mut self) {
        for t in &mut self.values {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|t| t.data().iter().all(|&v| v == 0.0))
    }

    /// Places every tensor on `tape`, differentiable when `trainable`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        Bound {
            vars: self.values.iter().map(|t| tape.leaf(t.clone(), trainable)).collect(),
        }
    }

    pub fn to_entries(&self) -> Vec<CheckpointEntry> {
        self.names.iter().cloned().zip(self.values.iter().cloned()).collect()
    }

    /// Overwrites values from checkpoint entries; names and shapes must
    /// match this store exactly.
    pub fn load_entries(&mut self, entries: Vec<CheckpointEntry>) -> Result<(), AutodiffError> {
        if entries.len() != self.values.len() {
            return Err(AutodiffError::Checkpoint(format!(
                "expected {} tensors, found {}",
                self.values.len(),
                entries.len()
            )));
        }
        for (name, t) in entries {
            let id = self
                .id(&name)
                .ok_or_else(|| AutodiffError::Checkpoint(format!("unknown tensor {:?}", name)))?;
            if t.shape() != self.get(id).shape() {
                return Err(AutodiffError::Checkpoint(format!(
                    "tensor {:?} has shape {:?}, expected {:?}",
                    name,
                    t.shape(),
                    self.get(id).shape()
                )));
            }
            self.values[id.0] = t;
        }
        Ok(())
    }
}

/// Dense layer `x W (+ b)` whose tensors live in a [`ParamStore`].
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    /// Glorot-uniform weights under `<name>/w`, zero bias under `<name>/b`.
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, bias: bool, rng: &mut R) -> Self {
        let w = store.add_glorot(format!("{}/w", name), fan_in, fan_out, rng);
        let b = bias.then(|| store.add(format!("{}/b", name), Tensor::zeros(&[fan_out])));
        Self { w, b }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var, AutodiffError> {
        let y = tape.matmul(x, p.var(self.w))?;
        match self.b {
            Some(b) => tape.add_row(y, p.var(b)),
            None => Ok(y),
        }
    }
}

/// Tape handles of a bound [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Copy with one parameter redirected to another tape variable.
    pub fn with_var(&self, id: ParamId, v: Var) -> Bound {
        let mut vars = self.vars.clone();
        vars[id.0] = v;
        Bound { vars }
    }

    /// Gradient of every parameter in store order; parameters that received
    /// none get zeros.
    pub fn collect_grads(&self, store: &ParamStore, grads: &Gradients) -> Vec<Tensor> {
        self.vars
            .iter()
            .zip(store.ids())
            .map(|(v, id)| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(store.get(id).shape())))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn glorot_samples_within_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = ParamStore::new();
        let id = s.add_glorot("w", 30, 10, &mut rng);
        let b = (6.0f64 / 40.0).sqrt();
        assert!(s.get(id).data().iter().all(|v| v.abs() <= b));
    }

    #[test]
    fn entries_round_trip_and_validate() {
        let mut s = ParamStore::new();
        s.add("a", Tensor::full(&[2, 2], 1.5));
        s.add("b", Tensor::scalar(2.0));
        let mut t = s.clone();
        t.zero_all();
        t.load_entries(s.to_entries()).unwrap();
        assert_eq!(s, t);
        let mut bad = s.to_entries();
        bad[1].1 = Tensor::zeros(&[2]);
        assert!(t.load_entries(bad).is_err());
    }
}
