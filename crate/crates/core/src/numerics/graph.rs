//! Reverse-mode differentiation over an explicit, append-only tape.
//!
//! Every operation evaluates eagerly and records how to propagate an
//! incoming gradient to its inputs. Nodes are stored in creation order,
//! which is a topological order, so `backward` is a single reverse sweep.

use std::collections::HashMap;
use std::sync::Arc;

use super::array::{self, Array, Shape};
use super::param::{ParamSet, Parameter};
use super::rng::Rng;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(u64),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatVec(Var, Var),
    MatMul(Var, Var),
    Concat(Vec<Var>),
    Sigmoid(Var),
    Tanh(Var),
    LogSumExp(Var),
    Sum(Var),
    SumSquares(Var),
    Pick(Var, usize),
    Row(Var, usize),
    Column(Var, usize),
}

#[derive(Debug)]
struct Node {
    value: Arc<Array>,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    bound: HashMap<u64, Var>,
}

/// Gradients of a scalar with respect to every parameter bound in a graph.
#[derive(Debug, Default)]
pub struct Gradients {
    by_param: HashMap<u64, Array>,
}

impl Gradients {
    pub fn get(&self, param: &Parameter) -> Option<&Array> {
        self.by_param.get(&param.uid())
    }

    /// Adds each gradient into the matching parameter's accumulator.
    pub fn accumulate_into<P: ParamSet + ?Sized>(&self, params: &mut P) {
        params.visit_mut(&mut |p| {
            if let Some(g) = self.by_param.get(&p.uid()) {
                p.grad_mut().add_assign(g);
            }
        });
    }
}

impl Graph {
    pub fn new() -> Graph {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Array, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, value: Array) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Array::scalar(value))
    }

    /// Binds a trainable parameter. Binding the same parameter twice
    /// returns the same node.
    pub fn param(&mut self, p: &Parameter) -> Var {
        if let Some(&v) = self.bound.get(&p.uid()) {
            return v;
        }
        self.nodes.push(Node {
            value: p.shared_value(),
            op: Op::Param(p.uid()),
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.bound.insert(p.uid(), v);
        v
    }

    /// Binds a parameter's current value as a constant (no gradient).
    pub fn frozen(&mut self, p: &Parameter) -> Var {
        self.nodes.push(Node {
            value: p.shared_value(),
            op: Op::Constant,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Binds `p` as trainable when `trainable`, otherwise as a constant.
    pub fn bind(&mut self, p: &Parameter, trainable: bool) -> Var {
        if trainable {
            self.param(p)
        } else {
            self.frozen(p)
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = array::add(self.value(a), self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = array::sub(self.value(a), self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = array::elementwise_mul(self.value(a), self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        let ng = self.needs(a);
        self.push(v, Op::Scale(a, c), ng)
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Var {
        let v = array::matvec(self.value(w), self.value(x));
        let ng = self.needs(w) || self.needs(x);
        self.push(v, Op::MatVec(w, x), ng)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = array::matmul(self.value(a), self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::MatMul(a, b), ng)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let v = {
            let arrays: Vec<&Array> = parts.iter().map(|&p| self.value(p)).collect();
            array::concat(&arrays)
        };
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(v, Op::Concat(parts.to_vec()), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = array::sigmoid(self.value(a));
        let ng = self.needs(a);
        self.push(v, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = array::tanh(self.value(a));
        let ng = self.needs(a);
        self.push(v, Op::Tanh(a), ng)
    }

    /// Stable `max + ln Σ exp(x − max)`, as a scalar.
    pub fn logsumexp(&mut self, a: Var) -> Var {
        let v = Array::scalar(array::logsumexp(self.value(a)));
        let ng = self.needs(a);
        self.push(v, Op::LogSumExp(a), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Array::scalar(self.value(a).data().iter().sum());
        let ng = self.needs(a);
        self.push(v, Op::Sum(a), ng)
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let v = Array::scalar(self.value(a).sum_squares());
        let ng = self.needs(a);
        self.push(v, Op::SumSquares(a), ng)
    }

    /// Element `i` of a vector (or flat index into a matrix), as a scalar.
    pub fn pick(&mut self, a: Var, i: usize) -> Var {
        let v = Array::scalar(self.value(a).data()[i]);
        let ng = self.needs(a);
        self.push(v, Op::Pick(a, i), ng)
    }

    pub fn row(&mut self, m: Var, r: usize) -> Var {
        let v = Array::vector(self.value(m).row(r).to_vec());
        let ng = self.needs(m);
        self.push(v, Op::Row(m, r), ng)
    }

    pub fn column(&mut self, m: Var, c: usize) -> Var {
        let v = Array::vector(self.value(m).column(c));
        let ng = self.needs(m);
        self.push(v, Op::Column(m, c), ng)
    }

    /// Inverted dropout: survivors are scaled by `1/(1−p)`. Identity when
    /// `training` is false or `p` is zero.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut Rng, training: bool) -> Var {
        assert!((0.0..1.0).contains(&p), "dropout probability must be in [0, 1), got {p}");
        if !training || p == 0.0 {
            return x;
        }
        let mask = dropout_mask(self.value(x).shape(), p, rng);
        let m = self.constant(mask);
        self.mul(x, m)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(
            self.value(loss).len(),
            1,
            "backward requires a scalar loss, got shape {}",
            self.value(loss).shape()
        );
        let mut grads: Vec<Option<Array>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Array::scalar(1.0));
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Constant => {}
                Op::Param(uid) => {
                    out.by_param
                        .entry(*uid)
                        .and_modify(|acc| acc.add_assign(&g))
                        .or_insert(g);
                }
                Op::Add(a, b) => {
                    self.send(&mut grads, *a, || g.clone());
                    self.send(&mut grads, *b, || g.clone());
                }
                Op::Sub(a, b) => {
                    self.send(&mut grads, *a, || g.clone());
                    self.send(&mut grads, *b, || g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    self.send(&mut grads, *a, || array::elementwise_mul(&g, vb));
                    self.send(&mut grads, *b, || array::elementwise_mul(&g, va));
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    self.send(&mut grads, *a, || g.map(|x| x * c));
                }
                Op::MatVec(w, x) => {
                    let (vw, vx) = (self.value(*w), self.value(*x));
                    self.send(&mut grads, *w, || array::outer(&g, vx));
                    self.send(&mut grads, *x, || array::matvec_transposed(vw, &g));
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    self.send(&mut grads, *a, || array::matmul(&g, &array::transpose(vb)));
                    self.send(&mut grads, *b, || array::matmul(&array::transpose(va), &g));
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let shape = self.value(p).shape();
                        let n = shape.len();
                        let slice = &g.data()[offset..offset + n];
                        self.send(&mut grads, p, || Array::new(shape, slice.to_vec()));
                        offset += n;
                    }
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    self.send(&mut grads, *a, || g.zip_map(y, |gi, yi| gi * yi * (1.0 - yi)));
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    self.send(&mut grads, *a, || g.zip_map(y, |gi, yi| gi * (1.0 - yi * yi)));
                }
                Op::LogSumExp(a) => {
                    let lse = node.value.item();
                    let gs = g.item();
                    let x = self.value(*a);
                    self.send(&mut grads, *a, || x.map(|xi| gs * (xi - lse).exp()));
                }
                Op::Sum(a) => {
                    let gs = g.item();
                    let shape = self.value(*a).shape();
                    self.send(&mut grads, *a, || Array::filled(shape, gs));
                }
                Op::SumSquares(a) => {
                    let gs = g.item();
                    let x = self.value(*a);
                    self.send(&mut grads, *a, || x.map(|xi| 2.0 * gs * xi));
                }
                Op::Pick(a, idx) => {
                    let shape = self.value(*a).shape();
                    let gs = g.item();
                    let idx = *idx;
                    self.send(&mut grads, *a, || {
                        let mut z = Array::zeros(shape);
                        z.data_mut()[idx] = gs;
                        z
                    });
                }
                Op::Row(m, r) => {
                    let shape = self.value(*m).shape();
                    let cols = self.value(*m).cols();
                    let r = *r;
                    self.send(&mut grads, *m, || {
                        let mut z = Array::zeros(shape);
                        z.data_mut()[r * cols..(r + 1) * cols].copy_from_slice(g.data());
                        z
                    });
                }
                Op::Column(m, c) => {
                    let shape = self.value(*m).shape();
                    let cols = self.value(*m).cols();
                    let c = *c;
                    self.send(&mut grads, *m, || {
                        let mut z = Array::zeros(shape);
                        for (r, &gv) in g.data().iter().enumerate() {
                            z.data_mut()[r * cols + c] = gv;
                        }
                        z
                    });
                }
            }
        }
        out
    }

    fn send(&self, grads: &mut [Option<Array>], to: Var, make: impl FnOnce() -> Array) {
        if !self.needs(to) {
            return;
        }
        let g = make();
        match &mut grads[to.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }
}

pub(crate) fn dropout_mask(shape: Shape, p: f64, rng: &mut Rng) -> Array {
    let keep = 1.0 / (1.0 - p);
    let data = (0..shape.len())
        .map(|_| if rng.uniform() >= p { keep } else { 0.0 })
        .collect();
    Array::new(shape, data)
}

/// Inverted dropout on a plain array.
pub fn dropout(x: &Array, p: f64, rng: &mut Rng, training: bool) -> Array {
    assert!((0.0..1.0).contains(&p), "dropout probability must be in [0, 1), got {p}");
    if !training || p == 0.0 {
        return x.clone();
    }
    array::elementwise_mul(x, &dropout_mask(x.shape(), p, rng))
}
