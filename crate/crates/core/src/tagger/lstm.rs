use crate::numerics::array::{self, matvec};
use crate::numerics::{Array, Graph, ParamSet, Parameter, Rng, Shape, Var};

/// One LSTM cell: four gate matrices of shape `h × (h + d_in)` acting on
/// `[h_{t−1}, x_t]`, and four bias vectors of length `h`.
#[derive(Debug, Clone)]
pub struct LstmCellParams {
    pub w_f: Parameter,
    pub w_i: Parameter,
    pub w_c: Parameter,
    pub w_o: Parameter,
    pub b_f: Parameter,
    pub b_i: Parameter,
    pub b_c: Parameter,
    pub b_o: Parameter,
}

impl LstmCellParams {
    pub fn zeros(prefix: &str, hidden: usize, input: usize) -> LstmCellParams {
        let w = |g: &str| Parameter::zeros(format!("{prefix}.w_{g}"), Shape::Matrix(hidden, hidden + input));
        let b = |g: &str| Parameter::zeros(format!("{prefix}.b_{g}"), Shape::Vector(hidden));
        LstmCellParams {
            w_f: w("f"),
            w_i: w("i"),
            w_c: w("c"),
            w_o: w("o"),
            b_f: b("f"),
            b_i: b("i"),
            b_c: b("c"),
            b_o: b("o"),
        }
    }

    /// Glorot-uniform gate matrices, zero biases.
    pub fn glorot(prefix: &str, hidden: usize, input: usize, rng: &mut Rng) -> LstmCellParams {
        let mut cell = LstmCellParams::zeros(prefix, hidden, input);
        for w in [&mut cell.w_f, &mut cell.w_i, &mut cell.w_c, &mut cell.w_o] {
            let name = w.name().to_string();
            *w = Parameter::glorot(name, hidden, hidden + input, rng);
        }
        cell
    }

    pub fn hidden(&self) -> usize {
        self.b_f.value().len()
    }

    pub fn input(&self) -> usize {
        self.w_f.value().cols() - self.hidden()
    }

    /// One step: returns `(h_t, C_t)`.
    ///
    /// ```text
    /// f = σ(W_f·[h, x] + b_f)      i = σ(W_i·[h, x] + b_i)
    /// C̃ = tanh(W_c·[h, x] + b_c)   C_t = f∗C + i∗C̃
    /// o = σ(W_o·[h, x] + b_o)      h_t = o∗tanh(C_t)
    /// ```
    pub fn step(&self, x: &Array, h_prev: &Array, c_prev: &Array) -> (Array, Array) {
        self.check_dims(x.len(), h_prev.len(), c_prev.len());
        let z = array::concat(&[h_prev, x]);
        let gate = |w: &Parameter, b: &Parameter| array::add(&matvec(w.value(), &z), b.value());
        let f = array::sigmoid(&gate(&self.w_f, &self.b_f));
        let i = array::sigmoid(&gate(&self.w_i, &self.b_i));
        let c_tilde = array::tanh(&gate(&self.w_c, &self.b_c));
        let o = array::sigmoid(&gate(&self.w_o, &self.b_o));
        let c = array::add(&array::elementwise_mul(&f, c_prev), &array::elementwise_mul(&i, &c_tilde));
        let h = array::elementwise_mul(&o, &array::tanh(&c));
        (h, c)
    }

    fn check_dims(&self, x: usize, h: usize, c: usize) {
        assert!(
            x == self.input() && h == self.hidden() && c == self.hidden(),
            "LSTM cell with hidden {} and input {} got x {x}, h {h}, C {c}",
            self.hidden(),
            self.input()
        );
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> LstmVars {
        LstmVars {
            w_f: g.bind(&self.w_f, trainable),
            w_i: g.bind(&self.w_i, trainable),
            w_c: g.bind(&self.w_c, trainable),
            w_o: g.bind(&self.w_o, trainable),
            b_f: g.bind(&self.b_f, trainable),
            b_i: g.bind(&self.b_i, trainable),
            b_c: g.bind(&self.b_c, trainable),
            b_o: g.bind(&self.b_o, trainable),
            hidden: self.hidden(),
            input: self.input(),
        }
    }
}

impl ParamSet for LstmCellParams {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        for p in [&self.w_f, &self.w_i, &self.w_c, &self.w_o, &self.b_f, &self.b_i, &self.b_c, &self.b_o] {
            f(p);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        for p in [
            &mut self.w_f,
            &mut self.w_i,
            &mut self.w_c,
            &mut self.w_o,
            &mut self.b_f,
            &mut self.b_i,
            &mut self.b_c,
            &mut self.b_o,
        ] {
            f(p);
        }
    }
}

/// An LSTM cell bound into a graph.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    w_f: Var,
    w_i: Var,
    w_c: Var,
    w_o: Var,
    b_f: Var,
    b_i: Var,
    b_c: Var,
    b_o: Var,
    pub hidden: usize,
    pub input: usize,
}

impl LstmVars {
    /// Graph version of [`LstmCellParams::step`].
    pub fn step(&self, g: &mut Graph, x: Var, h_prev: Var, c_prev: Var) -> (Var, Var) {
        let z = g.concat(&[h_prev, x]);
        let gate = |g: &mut Graph, w: Var, b: Var| {
            let wz = g.matvec(w, z);
            g.add(wz, b)
        };
        let f_pre = gate(g, self.w_f, self.b_f);
        let i_pre = gate(g, self.w_i, self.b_i);
        let c_pre = gate(g, self.w_c, self.b_c);
        let o_pre = gate(g, self.w_o, self.b_o);
        let f = g.sigmoid(f_pre);
        let i = g.sigmoid(i_pre);
        let c_tilde = g.tanh(c_pre);
        let o = g.sigmoid(o_pre);
        let keep = g.mul(f, c_prev);
        let write = g.mul(i, c_tilde);
        let c = g.add(keep, write);
        let tc = g.tanh(c);
        let h = g.mul(o, tc);
        (h, c)
    }

    /// Runs the cell over `inputs` from a zero state; one hidden state per input.
    pub fn run(&self, g: &mut Graph, inputs: &[Var]) -> Vec<Var> {
        let mut h = g.constant(Array::zeros(Shape::Vector(self.hidden)));
        let mut c = g.constant(Array::zeros(Shape::Vector(self.hidden)));
        let mut out = Vec::with_capacity(inputs.len());
        for &x in inputs {
            (h, c) = self.step(g, x, h, c);
            out.push(h);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_cell_from_zero_state() {
        let cell = LstmCellParams::zeros("c", 3, 2);
        let (h, c) = cell.step(&Array::vector(vec![0.7, -1.0]), &Array::zeros(Shape::Vector(3)), &Array::zeros(Shape::Vector(3)));
        assert_eq!(h.data(), &[0.0; 3]);
        assert_eq!(c.data(), &[0.0; 3]);
    }

    #[test]
    fn zero_cell_halves_memory() {
        let cell = LstmCellParams::zeros("c", 2, 1);
        let c_prev = Array::vector(vec![1.0, -3.0]);
        let (h, c) = cell.step(&Array::scalar(5.0), &Array::vector(vec![0.2, 0.4]), &c_prev);
        assert_eq!(c.data(), &[0.5, -1.5]);
        assert_eq!(h.data(), &[0.5 * 0.5f64.tanh(), 0.5 * (-1.5f64).tanh()]);
    }

    #[test]
    fn graph_step_matches_direct_step() {
        let mut rng = Rng::new(4);
        let cell = LstmCellParams::glorot("c", 3, 4, &mut rng);
        let x = Array::vector((0..4).map(|_| rng.uniform_range(-1.0, 1.0)).collect());
        let h = Array::vector((0..3).map(|_| rng.uniform_range(-1.0, 1.0)).collect());
        let c = Array::vector((0..3).map(|_| rng.uniform_range(-1.0, 1.0)).collect());
        let (h1, c1) = cell.step(&x, &h, &c);
        let mut g = Graph::new();
        let vars = cell.bind(&mut g, false);
        let (xv, hv, cv) = (g.constant(x), g.constant(h), g.constant(c));
        let (h2, c2) = vars.step(&mut g, xv, hv, cv);
        assert_eq!(g.value(h2), &h1);
        assert_eq!(g.value(c2), &c1);
    }

    #[test]
    #[should_panic(expected = "LSTM cell")]
    fn dimension_mismatch_panics() {
        let cell = LstmCellParams::zeros("c", 2, 3);
        cell.step(&Array::zeros(Shape::Vector(2)), &Array::zeros(Shape::Vector(2)), &Array::zeros(Shape::Vector(2)));
    }
}
