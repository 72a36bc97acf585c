use std::collections::BTreeMap;

use rand::Rng;

use super::{Gradients, Result, Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    /// Registration order within its store.
    pub fn index(self) -> usize {
        self.0
    }
}

/// A tensor with its gradient accumulator and Adam moments.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub m: Tensor,
    pub v: Tensor,
    pub step: u64,
    pub trainable: bool,
}

impl Parameter {
    fn new(name: String, value: Tensor, trainable: bool) -> Self {
        let zeros = Tensor::zeros(value.shape());
        Parameter {
            name,
            grad: zeros.clone(),
            m: zeros.clone(),
            v: zeros,
            value,
            step: 0,
            trainable,
        }
    }
}

/// Named parameters plus non-trainable buffers (running statistics).
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: BTreeMap<String, usize>,
    buffers: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    /// Registers a parameter; panics if the name is taken.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> ParamId {
        let name = name.into();
        assert!(!self.by_name.contains_key(&name), "duplicate parameter {name}");
        self.by_name.insert(name.clone(), self.params.len());
        self.params.push(Parameter::new(name, value, trainable));
        ParamId(self.params.len() - 1)
    }

    /// Glorot-uniform `[d_in x d_out]` weight.
    pub fn add_glorot(&mut self, name: impl Into<String>, d_in: usize, d_out: usize, rng: &mut impl Rng) -> ParamId {
        let limit = (6.0 / (d_in + d_out) as f64).sqrt();
        let data = (0..d_in * d_out).map(|_| rng.random_range(-limit..=limit)).collect();
        let value = Tensor::new(vec![d_in, d_out], data).expect("glorot shape");
        self.add(name, value, true)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Number of trainable scalars.
    pub fn n_trainable(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    /// Puts the parameter on the tape; frozen parameters become constants.
    pub fn bind(&self, tape: &mut Tape, id: ParamId) -> Var {
        let p = &self.params[id.0];
        if p.trainable {
            tape.var(p.value.clone())
        } else {
            tape.constant(p.value.clone())
        }
    }

    /// Adds the gradients of bound parameters into their accumulators.
    pub fn accumulate(&mut self, grads: &Gradients, bound: &[(ParamId, Var)]) {
        for &(id, var) in bound {
            let p = &mut self.params[id.0];
            if !p.trainable {
                continue;
            }
            if let Some(g) = grads.get(var) {
                p.grad.add_assign(g);
            }
        }
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= factor);
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn grads_finite(&self) -> bool {
        self.params.iter().all(|p| p.grad.is_finite())
    }

    pub fn buffer(&self, name: &str) -> Option<&Tensor> {
        self.buffers.get(name)
    }

    pub fn set_buffer(&mut self, name: impl Into<String>, value: Tensor) {
        self.buffers.insert(name.into(), value);
    }

    /// Parameter values followed by buffers, each under its name, buffers
    /// prefixed with `buffer:`.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = self.params.iter().map(|p| (p.name.clone(), p.value.clone())).collect();
        out.extend(self.buffers.iter().map(|(k, v)| (format!("buffer:{k}"), v.clone())));
        out
    }

    /// Overwrites values by name. Every parameter must be present with its
    /// registered shape.
    pub fn load_named(&mut self, tensors: Vec<(String, Tensor)>) -> Result<()> {
        let mut seen = vec![false; self.params.len()];
        for (name, t) in tensors {
            if let Some(buf) = name.strip_prefix("buffer:") {
                self.buffers.insert(buf.to_string(), t);
                continue;
            }
            let Some(&i) = self.by_name.get(&name) else {
                return Err(TensorError::Checkpoint(format!("unknown tensor {name}")));
            };
            if self.params[i].value.shape() != t.shape() {
                return Err(TensorError::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    self.params[i].value.shape()
                )));
            }
            self.params[i].value = t;
            seen[i] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(TensorError::Checkpoint(format!("missing tensor {}", self.params[i].name)));
        }
        Ok(())
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One update of every trainable parameter from its accumulated gradient.
    pub fn step(&self, store: &mut ParamStore) {
        for p in store.params.iter_mut().filter(|p| p.trainable) {
            self.update(p);
        }
    }

    pub fn update(&self, p: &mut Parameter) {
        p.step += 1;
        let t = p.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let g = p.grad.data();
        let (m, v, w) = (p.m.data_mut(), p.v.data_mut(), p.value.data_mut());
        for i in 0..g.len() {
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            w[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_step(adam: &Adam, store: &mut ParamStore, id: ParamId) {
        let mut tape = Tape::new();
        let w = store.bind(&mut tape, id);
        let sq = tape.mul(w, w).unwrap();
        let loss = tape.sum(sq);
        let grads = tape.backward(loss);
        store.zero_grad();
        store.accumulate(&grads, &[(id, w)]);
        adam.step(store);
    }

    #[test]
    fn adam_first_step_and_convergence() {
        let adam = Adam::new(0.1);
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::scalar(1.0), true);
        quadratic_step(&adam, &mut store, id);
        assert!((store.value(id).item() - 0.9).abs() < 1e-8);
        for _ in 1..500 {
            quadratic_step(&adam, &mut store, id);
        }
        assert!(store.value(id).item().abs() < 1e-3, "{}", store.value(id).item());
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let adam = Adam::new(0.1);
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::scalar(1.5), true);
        adam.step(&mut store);
        assert_eq!(store.value(id).item(), 1.5);
        assert_eq!(store.get(id).step, 1);
    }

    #[test]
    fn frozen_parameters_are_constants() {
        let mut store = ParamStore::new();
        let id = store.add("emb", Tensor::full(&[2, 2], 1.0), false);
        let mut tape = Tape::new();
        let v = store.bind(&mut tape, id);
        let s = tape.sum(v);
        let g = tape.backward(s);
        assert!(g.get(v).is_none());
        assert_eq!(store.n_trainable(), 0);
        Adam::new(1.0).step(&mut store);
        assert_eq!(store.value(id).data(), &[1.0; 4]);
    }

    #[test]
    fn load_named_checks_names_and_shapes() {
        let mut store = ParamStore::new();
        store.add("a", Tensor::zeros(&[2]), true);
        store.set_buffer("bn.mean", Tensor::zeros(&[2]));
        let mut saved = store.named_tensors();
        saved[0].1 = Tensor::full(&[2], 3.0);
        store.load_named(saved.clone()).unwrap();
        assert_eq!(store.value(store.id("a").unwrap()).data(), &[3.0, 3.0]);
        assert!(store.load_named(vec![("a".into(), Tensor::zeros(&[3]))]).is_err());
        assert!(store.load_named(vec![]).is_err());
        assert!(store.load_named(vec![("zz".into(), Tensor::zeros(&[1]))]).is_err());
    }
}
