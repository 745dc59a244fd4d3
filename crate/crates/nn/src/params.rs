//! Named parameter storage and seeded initialisation.

use std::ops::Index;

use ndarray::{Array2, ArrayD, IxDyn};
use nsx_core::Real;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autograd::{Gradients, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<ArrayD<T>>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self { names: Vec::new(), values: Vec::new() }
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: ArrayD<T>) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &ArrayD<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ArrayD<T> {
        &mut self.values[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ArrayD<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Places every parameter on `tape` as a differentiable leaf.
    pub fn bind(&self, tape: &Tape<T>) -> Bound<T> {
        Bound { vars: self.values.iter().map(|v| tape.leaf(v.clone())).collect() }
    }

    /// Converts to another scalar type, e.g. for f64 gradient checks.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(|v| v.mapv(|x| U::lit(x.to_f64_lossy()))).collect(),
        }
    }
}

/// Parameters bound to one tape.
pub struct Bound<T> {
    vars: Vec<Var<T>>,
}

impl<T: Real> Bound<T> {
    /// Gradients in store order.
    pub fn gradients(&self, grads: &mut Gradients<T>) -> Vec<ArrayD<T>> {
        self.vars.iter().map(|v| grads.take(v)).collect()
    }
}

impl<T> Index<ParamId> for Bound<T> {
    type Output = Var<T>;

    fn index(&self, id: ParamId) -> &Var<T> {
        &self.vars[id.0]
    }
}

/// Seeded initialisers.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Self { rng }
    }

    /// Uniform Kaiming initialisation for layers followed by PReLU (slope 0.25).
    pub fn kaiming<T: Real>(&mut self, shape: &[usize], fan_in: usize) -> ArrayD<T> {
        let gain = (2.0 / (1.0 + 0.25f64 * 0.25)).sqrt();
        let bound = gain * (3.0 / fan_in.max(1) as f64).sqrt();
        self.uniform(shape, bound)
    }

    pub fn uniform<T: Real>(&mut self, shape: &[usize], bound: f64) -> ArrayD<T> {
        let n = shape.iter().product();
        let v = (0..n).map(|_| T::lit(self.rng.gen_range(-bound..=bound))).collect();
        ArrayD::from_shape_vec(IxDyn(shape), v).expect("shape")
    }

    pub fn constant<T: Real>(&mut self, shape: &[usize], value: f64) -> ArrayD<T> {
        ArrayD::from_elem(IxDyn(shape), T::lit(value))
    }

    /// `blocks` stacked `n × n` orthogonal matrices (modified Gram-Schmidt on Gaussian draws).
    pub fn orthogonal_blocks<T: Real>(&mut self, blocks: usize, n: usize) -> ArrayD<T> {
        let mut out = Array2::<f64>::zeros((blocks * n, n));
        for b in 0..blocks {
            let mut m = Array2::<f64>::from_shape_fn((n, n), |_| self.rng.sample(StandardNormal));
            for i in 0..n {
                for j in 0..i {
                    let proj = m.row(i).dot(&m.row(j));
                    let rj = m.row(j).to_owned();
                    m.row_mut(i).scaled_add(-proj, &rj);
                }
                let norm = m.row(i).dot(&m.row(i)).sqrt();
                m.row_mut(i).mapv_inplace(|v| v / norm);
            }
            out.slice_mut(ndarray::s![b * n..(b + 1) * n, ..]).assign(&m);
        }
        out.mapv(T::lit).into_dyn()
    }
}
