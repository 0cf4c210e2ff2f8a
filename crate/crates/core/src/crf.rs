//! Linear-chain CRF over per-token emission scores.
//!
//! The score of a tag path `y` is
//! `start[y₁] + Σₜ em[t][yₜ] + Σₜ trans[yₜ₋₁][yₜ] + stop[y_N]`, and
//! `P(y | x) = exp(score(y) − log Z)`. Training minimizes
//! `log Z − score(gold) + Σₖ λₖ² / (2σ²)`.

use crate::corpus::{Tag, TagScheme};
use crate::numerics::array::logsumexp_slice;
use crate::numerics::{Array, Graph, ParamSet, Parameter, Rng, Shape, Var};

/// Score given to structurally forbidden transitions at decode time.
pub const FORBIDDEN: f64 = -1e4;

/// Per-token unnormalized tag scores, `N × T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Emissions {
    scores: Array,
}

impl Emissions {
    pub fn new(scores: Array) -> Emissions {
        assert!(
            matches!(scores.shape(), Shape::Matrix(n, t) if n >= 1 && t >= 1),
            "emissions must be a non-empty matrix, got {}",
            scores.shape()
        );
        Emissions { scores }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Emissions {
        Emissions::new(Array::from_rows(rows))
    }

    pub fn len(&self) -> usize {
        self.scores.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_tags(&self) -> usize {
        self.scores.cols()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        self.scores.row(t)
    }

    pub fn scores(&self) -> &Array {
        &self.scores
    }

    pub fn scores_mut(&mut self) -> &mut Array {
        &mut self.scores
    }
}

/// Transition, start and stop scores for `T` tags, plus the prior variance
/// `σ²` of the L2 penalty (`∞` disables it).
#[derive(Debug, Clone)]
pub struct CrfParams {
    pub transitions: Parameter,
    pub start: Parameter,
    pub stop: Parameter,
    pub sigma_sq: f64,
}

impl CrfParams {
    pub fn zeros(num_tags: usize) -> CrfParams {
        CrfParams {
            transitions: Parameter::zeros("crf.transitions", Shape::Matrix(num_tags, num_tags)),
            start: Parameter::zeros("crf.start", Shape::Vector(num_tags)),
            stop: Parameter::zeros("crf.stop", Shape::Vector(num_tags)),
            sigma_sq: f64::INFINITY,
        }
    }

    /// All scores drawn from `U(−scale, scale)`.
    pub fn random(num_tags: usize, scale: f64, rng: &mut Rng) -> CrfParams {
        let mut crf = CrfParams::zeros(num_tags);
        crf.visit_mut(&mut |p| {
            p.value_mut()
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.uniform_range(-scale, scale));
        });
        crf
    }

    pub fn num_tags(&self) -> usize {
        self.start.value().len()
    }

    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.transitions.value().get(from, to)
    }

    fn check(&self, em: &Emissions) {
        assert_eq!(
            em.num_tags(),
            self.num_tags(),
            "emissions have {} tags, CRF has {}",
            em.num_tags(),
            self.num_tags()
        );
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> CrfVars {
        CrfVars {
            transitions: g.bind(&self.transitions, trainable),
            start: g.bind(&self.start, trainable),
            stop: g.bind(&self.stop, trainable),
            num_tags: self.num_tags(),
        }
    }
}

impl ParamSet for CrfParams {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        f(&self.transitions);
        f(&self.start);
        f(&self.stop);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.transitions);
        f(&mut self.start);
        f(&mut self.stop);
    }
}

/// Path score of `tags` under `crf`.
pub fn score_sequence(em: &Emissions, crf: &CrfParams, tags: &[usize]) -> f64 {
    crf.check(em);
    assert_eq!(
        tags.len(),
        em.len(),
        "tag sequence length {} differs from sentence length {}",
        tags.len(),
        em.len()
    );
    let start = crf.start.value().data();
    let stop = crf.stop.value().data();
    let mut s = start[tags[0]];
    for (t, &y) in tags.iter().enumerate() {
        s += em.row(t)[y];
        if t > 0 {
            s += crf.transition(tags[t - 1], y);
        }
    }
    s + stop[tags[tags.len() - 1]]
}

/// `log Z` by the forward recursion.
pub fn forward_log_z(em: &Emissions, crf: &CrfParams) -> f64 {
    crf.check(em);
    let n_tags = crf.num_tags();
    let start = crf.start.value().data();
    let stop = crf.stop.value().data();
    let mut alpha: Vec<f64> = (0..n_tags).map(|j| start[j] + em.row(0)[j]).collect();
    let mut scratch = vec![0.0; n_tags];
    let mut next = vec![0.0; n_tags];
    for t in 1..em.len() {
        for j in 0..n_tags {
            for i in 0..n_tags {
                scratch[i] = alpha[i] + crf.transition(i, j);
            }
            next[j] = em.row(t)[j] + logsumexp_slice(&scratch);
        }
        std::mem::swap(&mut alpha, &mut next);
    }
    let last: Vec<f64> = alpha.iter().zip(stop).map(|(a, s)| a + s).collect();
    logsumexp_slice(&last)
}

/// Highest-scoring tag path and its score. Ties go to the lowest tag index,
/// both for the final tag and at every backpointer.
pub fn viterbi(em: &Emissions, crf: &CrfParams) -> (Vec<usize>, f64) {
    crf.check(em);
    let n_tags = crf.num_tags();
    let n = em.len();
    let start = crf.start.value().data();
    let stop = crf.stop.value().data();
    let mut delta: Vec<f64> = (0..n_tags).map(|j| start[j] + em.row(0)[j]).collect();
    let mut back = vec![vec![0usize; n_tags]; n];
    let mut next = vec![0.0; n_tags];
    for t in 1..n {
        for j in 0..n_tags {
            let (best_i, best) = argmax((0..n_tags).map(|i| delta[i] + crf.transition(i, j)));
            back[t][j] = best_i;
            next[j] = best + em.row(t)[j];
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let (mut y, best) = argmax((0..n_tags).map(|j| delta[j] + stop[j]));
    let mut path = vec![0; n];
    path[n - 1] = y;
    for t in (1..n).rev() {
        y = back[t][y];
        path[t - 1] = y;
    }
    (path, best)
}

/// First index of the maximum.
fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// `Σₖ λₖ² / (2σ²)` over every parameter in `params`; zero when `σ² = ∞`.
pub fn l2_penalty<P: ParamSet + ?Sized>(params: &P, sigma_sq: f64) -> f64 {
    if sigma_sq.is_infinite() {
        return 0.0;
    }
    let mut s = 0.0;
    params.visit(&mut |p| s += p.value().sum_squares());
    s / (2.0 * sigma_sq)
}

/// Negative regularized log-likelihood of `gold`. `reg` lists every
/// trainable parameter the penalty ranges over.
pub fn nll<P: ParamSet + ?Sized>(em: &Emissions, crf: &CrfParams, gold: &[usize], reg: &P) -> f64 {
    forward_log_z(em, crf) - score_sequence(em, crf, gold) + l2_penalty(reg, crf.sigma_sq)
}

/// Copy of `crf` with IOB2-illegal moves (`O → I-t`, `B-s/I-s → I-t` for
/// `s ≠ t`, start `→ I-t`) set to [`FORBIDDEN`].
pub fn constrain_transitions(crf: &CrfParams, scheme: &TagScheme) -> CrfParams {
    assert_eq!(crf.num_tags(), scheme.len(), "CRF size does not match the tag scheme");
    let mut out = crf.clone();
    let tags = scheme.tags();
    {
        let trans = out.transitions.value_mut();
        for (i, from) in tags.iter().enumerate() {
            for (j, to) in tags.iter().enumerate() {
                if !TagScheme::allows(Some(from), to) {
                    trans.set(i, j, FORBIDDEN);
                }
            }
        }
    }
    let start = out.start.value_mut();
    for (j, to) in tags.iter().enumerate() {
        if matches!(to, Tag::Inside(_)) {
            start.data_mut()[j] = FORBIDDEN;
        }
    }
    out
}

/// CRF parameters bound into a graph.
#[derive(Debug, Clone, Copy)]
pub struct CrfVars {
    pub transitions: Var,
    pub start: Var,
    pub stop: Var,
    num_tags: usize,
}

/// `log Z` as a graph node; `emissions` holds one length-`T` vector per token.
pub fn log_z_graph(g: &mut Graph, emissions: &[Var], crf: &CrfVars) -> Var {
    assert!(!emissions.is_empty(), "empty sentence");
    let mut alpha = g.add(crf.start, emissions[0]);
    for &em in &emissions[1..] {
        let mut terms = Vec::with_capacity(crf.num_tags);
        for j in 0..crf.num_tags {
            let col = g.column(crf.transitions, j);
            let s = g.add(alpha, col);
            terms.push(g.logsumexp(s));
        }
        let lse = g.concat(&terms);
        alpha = g.add(lse, em);
    }
    let last = g.add(alpha, crf.stop);
    g.logsumexp(last)
}

/// Path score of `tags` as a graph node.
pub fn score_graph(g: &mut Graph, emissions: &[Var], crf: &CrfVars, tags: &[usize]) -> Var {
    assert_eq!(tags.len(), emissions.len(), "tag sequence length differs from sentence length");
    let mut s = g.pick(crf.start, tags[0]);
    for (t, (&em, &y)) in emissions.iter().zip(tags).enumerate() {
        let e = g.pick(em, y);
        s = g.add(s, e);
        if t > 0 {
            let tr = g.pick(crf.transitions, tags[t - 1] * crf.num_tags + y);
            s = g.add(s, tr);
        }
    }
    let stop = g.pick(crf.stop, tags[tags.len() - 1]);
    g.add(s, stop)
}

/// `log Z − score(gold)`, without the L2 penalty.
pub fn nll_graph(g: &mut Graph, emissions: &[Var], crf: &CrfVars, gold: &[usize]) -> Var {
    let log_z = log_z_graph(g, emissions, crf);
    let score = score_graph(g, emissions, crf, gold);
    g.sub(log_z, score)
}

/// `Σ ‖v‖² / (2σ²)` over `vars`, or `None` when `σ² = ∞`.
pub fn l2_penalty_graph(g: &mut Graph, vars: &[Var], sigma_sq: f64) -> Option<Var> {
    if sigma_sq.is_infinite() || vars.is_empty() {
        return None;
    }
    let mut total: Option<Var> = None;
    for &v in vars {
        let sq = g.sum_squares(v);
        total = Some(match total {
            Some(t) => g.add(t, sq),
            None => sq,
        });
    }
    total.map(|t| g.scale(t, 1.0 / (2.0 * sigma_sq)))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::LN_2;

    use super::*;

    #[test]
    fn single_emission_score() {
        let crf = CrfParams::zeros(2);
        let em = Emissions::from_rows(&[vec![2.0, 5.0]]);
        assert_eq!(score_sequence(&em, &crf, &[1]), 5.0);
    }

    #[test]
    fn two_by_two_path_scores_by_hand() {
        let mut crf = CrfParams::zeros(2);
        crf.start.set_value(Array::vector(vec![0.1, 0.2]));
        crf.stop.set_value(Array::vector(vec![0.3, 0.4]));
        crf.transitions
            .set_value(Array::from_rows(&[vec![0.5, 0.6], vec![0.7, 0.8]]));
        let em = Emissions::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        // start + em0 + trans + em1 + stop, summed by hand for each of the 4 paths
        let expected = [
            ([0, 0], 0.1 + 1.0 + 0.5 + 3.0 + 0.3),
            ([0, 1], 0.1 + 1.0 + 0.6 + 4.0 + 0.4),
            ([1, 0], 0.2 + 2.0 + 0.7 + 3.0 + 0.3),
            ([1, 1], 0.2 + 2.0 + 0.8 + 4.0 + 0.4),
        ];
        for (path, want) in expected {
            assert!((score_sequence(&em, &crf, &path) - want).abs() < 1e-12);
        }
        let (best, score) = viterbi(&em, &crf);
        assert_eq!(best, vec![1, 1]);
        assert!((score - 7.4).abs() < 1e-12);
    }

    #[test]
    fn uniform_partition_functions() {
        let crf = CrfParams::zeros(2);
        let one = Emissions::from_rows(&[vec![0.0, 0.0]]);
        assert!((forward_log_z(&one, &crf) - LN_2).abs() < 1e-15);
        let three = Emissions::from_rows(&vec![vec![0.0, 0.0]; 3]);
        assert!((forward_log_z(&three, &crf) - 8f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn nll_examples() {
        let crf = CrfParams::zeros(2);
        let none: Vec<Parameter> = vec![];
        let em = Emissions::from_rows(&[vec![0.0, 0.0]]);
        assert!((nll(&em, &crf, &[0], &none) - LN_2).abs() < 1e-15);

        let saturated = Emissions::from_rows(&[vec![100.0, 0.0]]);
        assert!(nll(&saturated, &crf, &[0], &none) < 1e-40);

        let mut reg = crf.clone();
        reg.sigma_sq = 1.0;
        let lambda = vec![Parameter::new("lambda", Array::scalar(2.0))];
        assert!((nll(&em, &reg, &[0], &lambda) - (LN_2 + 2.0)).abs() < 1e-15);
    }

    #[test]
    fn viterbi_breaks_ties_low() {
        let crf = CrfParams::zeros(3);
        let em = Emissions::from_rows(&vec![vec![0.0; 3]; 4]);
        assert_eq!(viterbi(&em, &crf).0, vec![0; 4]);
        let em = Emissions::from_rows(&[vec![1.0, 3.0, 3.0]]);
        assert_eq!(viterbi(&em, &crf), (vec![1], 3.0));
    }

    #[test]
    fn per_position_argmax_without_transitions() {
        let crf = CrfParams::zeros(3);
        let em = Emissions::from_rows(&[
            vec![5.0, 0.0, 0.0],
            vec![0.0, 5.0, 0.0],
            vec![0.0, 0.0, 5.0],
            vec![5.0, 0.0, 0.0],
        ]);
        assert_eq!(viterbi(&em, &crf).0, vec![0, 1, 2, 0]);
    }

    #[test]
    fn constraint_entries() {
        let scheme = TagScheme::new(["Disease", "Chem"]);
        let crf = constrain_transitions(&CrfParams::zeros(scheme.len()), &scheme);
        let idx = |s: &str| scheme.index_of(&s.parse().unwrap()).unwrap();
        assert_eq!(crf.transition(idx("O"), idx("I-Disease")), FORBIDDEN);
        assert_eq!(crf.transition(idx("B-Chem"), idx("I-Disease")), FORBIDDEN);
        assert_eq!(crf.transition(idx("I-Chem"), idx("I-Disease")), FORBIDDEN);
        assert_eq!(crf.transition(idx("B-Disease"), idx("I-Disease")), 0.0);
        assert_eq!(crf.transition(idx("I-Disease"), idx("I-Disease")), 0.0);
        assert_eq!(crf.transition(idx("I-Disease"), idx("B-Chem")), 0.0);
        assert_eq!(crf.start.value().data()[idx("I-Chem")], FORBIDDEN);
        assert_eq!(crf.start.value().data()[idx("B-Chem")], 0.0);
    }

    #[test]
    fn graph_and_direct_routes_agree() {
        let mut rng = Rng::new(9);
        let crf = CrfParams::random(3, 1.0, &mut rng);
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..3).map(|_| rng.uniform_range(-2.0, 2.0)).collect())
            .collect();
        let em = Emissions::from_rows(&rows);
        let gold = [0, 2, 1, 1];
        let mut g = Graph::new();
        let vars = crf.bind(&mut g, true);
        let ems: Vec<Var> = rows.iter().map(|r| g.constant(Array::vector(r.clone()))).collect();
        let loss = nll_graph(&mut g, &ems, &vars, &gold);
        let direct = nll(&em, &crf, &gold, &Vec::<Parameter>::new());
        assert!((g.value(loss).item() - direct).abs() < 1e-12);
    }
}
