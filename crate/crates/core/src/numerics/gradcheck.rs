use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Grads, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coordinates: usize,
    /// Largest error per parameter tensor, in store order.
    pub per_param: Vec<(String, f64)>,
    /// `(param, flat index, analytic, numeric)` of the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Compares reverse-mode gradients with central finite differences.
///
/// `loss` is evaluated with `Some(grads)` once for the analytic gradient and
/// with `None` for every perturbed point. Per coordinate the error is
/// `|a − n| / max(|a|, |n|, floor)`. At most `per_param` coordinates are
/// sampled from each tensor (all of them when `None`).
pub fn grad_check<L>(
    params: &ParamStore<f64>,
    loss: L,
    eps: f64,
    floor: f64,
    per_param: Option<usize>,
    seed: u64,
) -> Result<GradCheckReport>
where
    L: Fn(&ParamStore<f64>, Option<&mut Grads<f64>>) -> Result<f64>,
{
    let base_a = loss(params, None)?;
    let base_b = loss(params, None)?;
    if base_a.to_bits() != base_b.to_bits() {
        return Err(Error::GradCheck(format!(
            "loss is not deterministic ({base_a} vs {base_b})"
        )));
    }
    let mut grads = Grads::for_store(params);
    loss(params, Some(&mut grads))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coordinates: 0,
        per_param: Vec::new(),
        worst: None,
    };
    for (id, name, value) in params.iter() {
        let n = value.len();
        let coords: Vec<usize> = match per_param {
            Some(k) if k < n => sample(&mut rng, n, k).into_vec(),
            _ => (0..n).collect(),
        };
        let mut worst_here = 0.0f64;
        for k in coords {
            let orig = value.data()[k];
            work.get_mut(id).data_mut()[k] = orig + eps;
            let up = loss(&work, None)?;
            work.get_mut(id).data_mut()[k] = orig - eps;
            let down = loss(&work, None)?;
            work.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[k]);
            let denom = analytic.abs().max(numeric.abs()).max(floor);
            let rel = (analytic - numeric).abs() / denom;
            report.coordinates += 1;
            worst_here = worst_here.max(rel);
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((name.to_string(), k, analytic, numeric));
            }
        }
        report.per_param.push((name.to_string(), worst_here));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::super::{Graph, Mat, SoftmaxMask};
    use super::*;
    use std::cell::Cell;

    #[test]
    fn square_at_three() {
        let mut store = ParamStore::new();
        let x = store.add("x", Mat::scalar(3.0));
        let report = grad_check(
            &store,
            |p, grads| {
                let mut g = Graph::new(p);
                let v = g.param(x);
                let sq = g.matmul(v, v);
                if let Some(gr) = grads {
                    g.backward(sq, gr);
                }
                Ok(g.value(sq).data()[0])
            },
            1e-5,
            1e-12,
            None,
            0,
        )
        .unwrap();
        let (_, _, analytic, _) = report.worst.clone().unwrap();
        assert_eq!(analytic, 6.0);
        assert!(report.max_rel_error < 1e-7, "{report:?}");
    }

    #[test]
    fn softmax_weighted_sum() {
        let mut store = ParamStore::new();
        let x = store.add("x", Mat::row_vector(vec![0.3, -1.2, 2.0, 0.1]));
        let c = Mat::from_vec(4, 1, vec![1.0, -2.0, 0.5, 3.0]);
        let report = grad_check(
            &store,
            |p, grads| {
                let mut g = Graph::new(p);
                let v = g.param(x);
                let s = g.softmax_rows(v, &SoftmaxMask::none());
                let cv = g.constant(c.clone());
                let out = g.matmul(s, cv);
                if let Some(gr) = grads {
                    g.backward(out, gr);
                }
                Ok(g.value(out).data()[0])
            },
            1e-5,
            1e-12,
            None,
            0,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn nondeterministic_loss_rejected() {
        let mut store = ParamStore::new();
        store.add("x", Mat::scalar(1.0));
        let calls = Cell::new(0.0);
        let err = grad_check(
            &store,
            |_, _| {
                calls.set(calls.get() + 1.0);
                Ok(calls.get())
            },
            1e-5,
            1e-12,
            None,
            0,
        );
        assert!(matches!(err, Err(Error::GradCheck(_))));
    }
}
