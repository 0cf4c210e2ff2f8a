use std::fmt;

use super::graph::{Graph, Var};
use super::param::ParamSet;
use super::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateCheck {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    pub worst: Option<CoordinateCheck>,
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "gradient check: {} coordinates, max relative error {:.3e}",
            self.coords_checked, self.max_rel_error
        )?;
        if let Some(w) = &self.worst {
            write!(
                f,
                " at {}[{}] (analytic {:.6e}, numeric {:.6e})",
                w.param, w.index, w.analytic, w.numeric
            )?;
        }
        Ok(())
    }
}

/// `|a − n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / f64::max(1e-8, analytic.abs() + numeric.abs())
}

/// Compares reverse-mode gradients of `loss` against central differences.
///
/// `loss` must build a deterministic scalar from the current parameter
/// values of `model`. At most `max_coords` coordinates are checked, chosen
/// uniformly without replacement using `rng`; `None` checks all of them.
/// Parameter values are restored bit-exactly afterwards and gradients are
/// left zeroed.
pub fn gradient_check<M, F>(
    model: &mut M,
    mut loss: F,
    eps: f64,
    max_coords: Option<usize>,
    rng: &mut Rng,
) -> GradCheckReport
where
    M: ParamSet + ?Sized,
    F: FnMut(&M, &mut Graph) -> Var,
{
    model.zero_grads();
    let mut g = Graph::new();
    let out = loss(model, &mut g);
    g.backward(out).accumulate_into(model);

    let mut analytic: Vec<(String, Vec<f64>)> = Vec::new();
    model.visit(&mut |p| analytic.push((p.name().to_string(), p.grad().data().to_vec())));
    model.zero_grads();

    let mut coords: Vec<(usize, usize)> = analytic
        .iter()
        .enumerate()
        .flat_map(|(pi, (_, g))| (0..g.len()).map(move |i| (pi, i)))
        .collect();
    if let Some(limit) = max_coords {
        if limit < coords.len() {
            rng.shuffle(&mut coords);
            coords.truncate(limit);
        }
    }

    let mut eval = |model: &M| {
        let mut g = Graph::new();
        let out = loss(model, &mut g);
        g.value(out).item()
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coords_checked: 0,
        worst: None,
    };
    for (pi, idx) in coords {
        let original = nudge(model, pi, idx, None);
        nudge(model, pi, idx, Some(original + eps));
        let plus = eval(model);
        nudge(model, pi, idx, Some(original - eps));
        let minus = eval(model);
        nudge(model, pi, idx, Some(original));

        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[pi].1[idx];
        let err = relative_error(a, numeric);
        report.coords_checked += 1;
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some(CoordinateCheck {
                param: analytic[pi].0.clone(),
                index: idx,
                analytic: a,
                numeric,
                rel_error: err,
            });
        }
    }
    report
}

/// Reads coordinate `idx` of the `pi`-th parameter, optionally overwriting it.
fn nudge<M: ParamSet + ?Sized>(model: &mut M, pi: usize, idx: usize, set: Option<f64>) -> f64 {
    let mut k = 0;
    let mut old = 0.0;
    model.visit_mut(&mut |p| {
        if k == pi {
            old = p.value().data()[idx];
            if let Some(v) = set {
                p.value_mut().data_mut()[idx] = v;
            }
        }
        k += 1;
    });
    old
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Array, Parameter};

    #[test]
    fn quadratic_is_exact() {
        let mut ps = vec![Parameter::new("theta", Array::vector(vec![0.3, -1.7, 2.5]))];
        let report = gradient_check(
            &mut ps,
            |ps, g| {
                let t = g.param(&ps[0]);
                g.sum_squares(t)
            },
            1e-5,
            None,
            &mut Rng::new(0),
        );
        assert_eq!(report.coords_checked, 3);
        assert!(report.max_rel_error < 1e-9, "{report}");
        assert_eq!(ps[0].value().data(), &[0.3, -1.7, 2.5]);
    }

    #[test]
    fn constant_function_has_zero_error() {
        let mut ps = vec![Parameter::new("theta", Array::vector(vec![1.0, 2.0]))];
        let report = gradient_check(&mut ps, |_, g| g.scalar(4.0), 1e-5, None, &mut Rng::new(0));
        assert_eq!(report.max_rel_error, 0.0);
        let worst = report.worst.unwrap();
        assert_eq!((worst.analytic, worst.numeric), (0.0, 0.0));
    }
}
