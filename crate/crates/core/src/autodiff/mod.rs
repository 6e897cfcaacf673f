//! Trainable parameters and everything that touches them: initialization,
//! loss, weight decay, the Nadam optimizer, checkpoints and a finite-difference
//! gradient checker.

mod checkpoint;
mod gradcheck;
mod init;
mod loss;
mod optim;
mod schedule;

pub use checkpoint::{checkpoint_digest, load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, Evaluation, GradCheckConfig, GradCheckReport, Objective};
pub use init::he_uniform_init;
pub use loss::{apply_l2, euclidean_loss, l2_penalty};
pub use optim::Nadam;
pub use schedule::{LrPhase, TrainConfig};

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// Weights receive L2 decay; biases do not.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One named parameter array with its gradient accumulator and Nadam moments.
#[derive(Clone, Debug)]
pub struct Param<T> {
    name: String,
    kind: ParamKind,
    shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
    pub(crate) first_moment: Vec<T>,
    pub(crate) second_moment: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ParamKind {
        self.kind
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Ordered collection of uniquely named parameters.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    by_name: HashMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, kind: ParamKind, shape: &[usize], value: Vec<T>) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Param(format!("duplicate parameter name `{name}`")));
        }
        let len: usize = shape.iter().product();
        if len != value.len() || len == 0 {
            return Err(Error::shape(format!(
                "parameter `{name}` has {} values for shape {shape:?}",
                value.len()
            )));
        }
        let id = self.params.len();
        self.by_name.insert(name.clone(), id);
        self.params.push(Param {
            name,
            kind,
            shape: shape.to_vec(),
            value,
            grad: vec![T::zero(); len],
            first_moment: vec![T::zero(); len],
            second_moment: vec![T::zero(); len],
        });
        Ok(ParamId(id))
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &[T] {
        &self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(Param::len).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::zero());
        }
    }

    /// Mutable access to a parameter's value and gradient simultaneously.
    pub fn value_and_grad_mut(&mut self, id: ParamId) -> (&[T], &mut [T]) {
        let p = &mut self.params[id.0];
        (&p.value, &mut p.grad)
    }

    /// Value slices of a kernel/bias pair together with their gradient
    /// accumulators.
    pub(crate) fn conv_parts(&mut self, weight: ParamId, bias: ParamId) -> (&[T], &[T], &mut [T], &mut [T]) {
        let [w, b] = self
            .params
            .get_disjoint_mut([weight.0, bias.0])
            .expect("kernel and bias are distinct parameters");
        (&w.value, &b.value, &mut w.grad, &mut b.grad)
    }

    /// Copy of the values converted to another precision. Gradients and
    /// optimizer state start from zero.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for p in &self.params {
            out.add(
                p.name.clone(),
                p.kind,
                &p.shape,
                p.value.iter().map(|&v| U::from_f64_lossy(v.as_f64())).collect(),
            )
            .expect("names and shapes already validated");
        }
        out
    }

    /// Overwrite values from another store with identical names and shapes.
    pub fn load_values(&mut self, other: &ParamStore<T>) -> Result<()> {
        if other.params.len() != self.params.len() {
            return Err(Error::Param(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                other.params.len()
            )));
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.name != src.name || dst.shape != src.shape {
                return Err(Error::Param(format!(
                    "parameter `{}` {:?} does not match `{}` {:?}",
                    dst.name, dst.shape, src.name, src.shape
                )));
            }
            dst.value.copy_from_slice(&src.value);
        }
        Ok(())
    }
}
