use std::fmt;

use serde::{Deserialize, Serialize};

/// Shape of a dense array: a vector `(len,)` or a row-major matrix `(rows, cols)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            Shape::Vector(n) => vec![n],
            Shape::Matrix(r, c) => vec![r, c],
        }
    }

    pub fn from_dims(dims: &[usize]) -> Option<Shape> {
        match dims {
            [n] => Some(Shape::Vector(*n)),
            [r, c] => Some(Shape::Matrix(*r, *c)),
            _ => None,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Vector(n) => write!(f, "({n},)"),
            Shape::Matrix(r, c) => write!(f, "({r}, {c})"),
        }
    }
}

/// Dense double-precision array. Scalars are vectors of length one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Array {
    shape: Shape,
    data: Vec<f64>,
}

impl Array {
    pub fn new(shape: Shape, data: Vec<f64>) -> Array {
        assert_eq!(
            shape.len(),
            data.len(),
            "array data length {} does not match shape {shape}",
            data.len()
        );
        Array { shape, data }
    }

    pub fn zeros(shape: Shape) -> Array {
        Array {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn filled(shape: Shape, value: f64) -> Array {
        Array {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn vector(data: Vec<f64>) -> Array {
        Array {
            shape: Shape::Vector(data.len()),
            data,
        }
    }

    pub fn scalar(value: f64) -> Array {
        Array::vector(vec![value])
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Array {
        Array::new(Shape::Matrix(rows, cols), data)
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Array {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            assert_eq!(row.len(), cols, "ragged rows");
            data.extend_from_slice(row);
        }
        Array::matrix(rows.len(), cols, data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn rows(&self) -> usize {
        match self.shape {
            Shape::Vector(n) => n,
            Shape::Matrix(r, _) => r,
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape {
            Shape::Vector(_) => 1,
            Shape::Matrix(_, c) => c,
        }
    }

    /// The single value of a length-one array.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on array of shape {}", self.shape);
        self.data[0]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols() + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let cols = self.cols();
        self.data[row * cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let cols = self.cols();
        &self.data[row * cols..(row + 1) * cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        let cols = self.cols();
        (0..self.rows()).map(|r| self.data[r * cols + col]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Array {
        Array {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Array, f: impl Fn(f64, f64) -> f64) -> Array {
        assert_same_shape(self, other);
        Array {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Array) {
        assert_same_shape(self, other);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `self += scale * other`, elementwise.
    pub fn add_scaled(&mut self, other: &Array, scale: f64) {
        assert_same_shape(self, other);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }
}

fn assert_same_shape(a: &Array, b: &Array) {
    assert!(
        a.len() == b.len() && a.rows() == b.rows(),
        "shape mismatch: {} vs {}",
        a.shape,
        b.shape
    );
}

pub fn add(a: &Array, b: &Array) -> Array {
    a.zip_map(b, |x, y| x + y)
}

pub fn sub(a: &Array, b: &Array) -> Array {
    a.zip_map(b, |x, y| x - y)
}

pub fn elementwise_mul(a: &Array, b: &Array) -> Array {
    a.zip_map(b, |x, y| x * y)
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Array) -> Array {
    x.map(sigmoid_scalar)
}

pub fn tanh(x: &Array) -> Array {
    x.map(f64::tanh)
}

/// `W · x` for a `(rows, cols)` matrix and a length-`cols` vector.
pub fn matvec(w: &Array, x: &Array) -> Array {
    let (rows, cols) = match w.shape() {
        Shape::Matrix(r, c) => (r, c),
        s => panic!("matvec: left operand must be a matrix, got {s}"),
    };
    assert_eq!(
        x.len(),
        cols,
        "matvec: matrix {} cannot multiply vector of length {}",
        w.shape(),
        x.len()
    );
    let xs = x.data();
    let out = (0..rows)
        .map(|r| w.row(r).iter().zip(xs).map(|(a, b)| a * b).sum())
        .collect();
    Array::vector(out)
}

/// `Wᵀ · y` for a `(rows, cols)` matrix and a length-`rows` vector.
pub fn matvec_transposed(w: &Array, y: &Array) -> Array {
    let cols = w.cols();
    assert_eq!(y.len(), w.rows(), "matvec_transposed: length mismatch");
    let mut out = vec![0.0; cols];
    for (r, &yr) in y.data().iter().enumerate() {
        if yr == 0.0 {
            continue;
        }
        for (o, &wv) in out.iter_mut().zip(w.row(r)) {
            *o += wv * yr;
        }
    }
    Array::vector(out)
}

/// Matrix product of `(n, k)` and `(k, m)` matrices.
pub fn matmul(a: &Array, b: &Array) -> Array {
    let (n, k) = (a.rows(), a.cols());
    let (k2, m) = (b.rows(), b.cols());
    assert!(
        matches!(a.shape(), Shape::Matrix(..)) && matches!(b.shape(), Shape::Matrix(..)),
        "matmul requires matrices, got {} and {}",
        a.shape(),
        b.shape()
    );
    assert_eq!(k, k2, "matmul: inner dimensions {k} and {k2} differ");
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for p in 0..k {
            let av = a.get(i, p);
            if av == 0.0 {
                continue;
            }
            let brow = b.row(p);
            let orow = &mut out[i * m..(i + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Array::matrix(n, m, out)
}

pub fn transpose(a: &Array) -> Array {
    let (r, c) = (a.rows(), a.cols());
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a.get(i, j);
        }
    }
    Array::matrix(c, r, out)
}

/// `outer(y, x)`, a `(len(y), len(x))` matrix.
pub fn outer(y: &Array, x: &Array) -> Array {
    let mut out = Vec::with_capacity(y.len() * x.len());
    for &a in y.data() {
        out.extend(x.data().iter().map(|&b| a * b));
    }
    Array::matrix(y.len(), x.len(), out)
}

pub fn concat(parts: &[&Array]) -> Array {
    let mut out = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for p in parts {
        out.extend_from_slice(p.data());
    }
    Array::vector(out)
}

/// `max + ln Σ exp(x − max)`; `-inf` for an empty or all-`-inf` input.
pub fn logsumexp_slice(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max.is_infinite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

pub fn logsumexp(x: &Array) -> f64 {
    logsumexp_slice(x.data())
}

pub fn log_softmax(x: &Array) -> Array {
    let lse = logsumexp(x);
    x.map(|v| v - lse)
}
