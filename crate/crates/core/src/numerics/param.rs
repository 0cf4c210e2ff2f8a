use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

use super::array::{Array, Shape};
use super::rng::Rng;

static NEXT_UID: AtomicU64 = AtomicU64::new(1);

fn fresh_uid() -> u64 {
    NEXT_UID.fetch_add(1, Ordering::Relaxed)
}

/// A trainable array with its gradient accumulator.
///
/// The value is shared copy-on-write with any computation graph that
/// reads it, so binding a parameter into a graph never copies its data.
#[derive(Debug)]
pub struct Parameter {
    uid: u64,
    name: String,
    value: Arc<Array>,
    grad: Array,
}

impl Clone for Parameter {
    fn clone(&self) -> Self {
        Parameter {
            uid: fresh_uid(),
            name: self.name.clone(),
            value: Arc::new((*self.value).clone()),
            grad: self.grad.clone(),
        }
    }
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Array) -> Parameter {
        let grad = Array::zeros(value.shape());
        Parameter {
            uid: fresh_uid(),
            name: name.into(),
            value: Arc::new(value),
            grad,
        }
    }

    pub fn zeros(name: impl Into<String>, shape: Shape) -> Parameter {
        Parameter::new(name, Array::zeros(shape))
    }

    /// Weight matrix drawn from `U(−√(6/(fan_in+fan_out)), +√(6/(fan_in+fan_out)))`.
    pub fn glorot(name: impl Into<String>, rows: usize, cols: usize, rng: &mut Rng) -> Parameter {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.uniform_range(-bound, bound))
            .collect();
        Parameter::new(name, Array::matrix(rows, cols, data))
    }

    pub fn uid(&self) -> u64 {
        self.uid
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Array {
        &self.value
    }

    pub(crate) fn shared_value(&self) -> Arc<Array> {
        Arc::clone(&self.value)
    }

    pub fn value_mut(&mut self) -> &mut Array {
        Arc::make_mut(&mut self.value)
    }

    pub fn set_value(&mut self, value: Array) {
        assert_eq!(value.shape(), self.value.shape(), "parameter {} reshaped", self.name);
        self.value = Arc::new(value);
    }

    pub fn grad(&self) -> &Array {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut Array {
        &mut self.grad
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Anything that owns a fixed, ordered collection of parameters.
pub trait ParamSet {
    fn visit(&self, f: &mut dyn FnMut(&Parameter));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| n += p.value().len());
        n
    }

    fn zero_grads(&mut self) {
        self.visit_mut(&mut |p| p.zero_grad());
    }

    /// `(name, L2 norm)` of every parameter value, for diagnostics.
    fn value_norms(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        self.visit(&mut |p| out.push((p.name().to_string(), p.value().norm())));
        out
    }

    fn grad_norm(&self) -> f64 {
        let mut s = 0.0;
        self.visit(&mut |p| s += p.grad().sum_squares());
        s.sqrt()
    }
}

impl ParamSet for Vec<Parameter> {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        self.iter().for_each(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.iter_mut().for_each(f);
    }
}

impl ParamSet for Parameter {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        f(self);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(self);
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("non-finite gradient in parameter `{name}`")]
pub struct NonFiniteGradient {
    pub name: String,
}

/// Plain SGD: `value ← value − lr·grad`, then zero the gradient.
///
/// All gradients are checked before any value is touched, so a failed step
/// leaves the parameters unchanged.
pub fn sgd_step<P: ParamSet + ?Sized>(params: &mut P, lr: f64) -> Result<(), NonFiniteGradient> {
    assert!(lr > 0.0, "learning rate must be positive, got {lr}");
    let mut bad = None;
    params.visit(&mut |p| {
        if bad.is_none() && !p.grad().is_finite() {
            bad = Some(p.name().to_string());
        }
    });
    if let Some(name) = bad {
        return Err(NonFiniteGradient { name });
    }
    params.visit_mut(&mut |p| {
        let grad = std::mem::replace(&mut p.grad, Array::zeros(p.value.shape()));
        p.value_mut().add_scaled(&grad, -lr);
    });
    Ok(())
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<P: ParamSet + ?Sized>(params: &mut P, max_norm: f64) -> f64 {
    let norm = params.grad_norm();
    if norm > max_norm && norm.is_finite() {
        let scale = max_norm / norm;
        params.visit_mut(&mut |p| p.grad_mut().data_mut().iter_mut().for_each(|g| *g *= scale));
    }
    norm
}
