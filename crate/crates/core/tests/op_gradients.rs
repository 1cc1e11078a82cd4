//! Finite-difference checks of every differentiable graph operation in
//! 64-bit mode.

mod common;

use std::rc::Rc;

use common::toy_graph;
use kgrule::numerics::{grad_check, EdgeList, Graph, Mat, ParamId, ParamStore, SoftmaxMask, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat<f64> {
    Mat::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn positive(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat<f64> {
    Mat::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(0.1..1.0)).collect())
}

/// Checks `left · gelu(op(params)) · right`, with fixed random `left` and
/// `right`, against finite differences.
fn check(name: &str, store: &ParamStore<f64>, training: bool, build: impl Fn(&mut Graph<'_, f64>) -> Var) {
    let report = grad_check(
        store,
        |p, grads| {
            let mut g = if training {
                Graph::training(p, ChaCha8Rng::seed_from_u64(5))
            } else {
                Graph::new(p)
            };
            let y = build(&mut g);
            let (r, c) = g.value(y).shape();
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let left = g.constant(random(&mut rng, 1, r));
            let right = g.constant(random(&mut rng, c, 1));
            let h = g.gelu(y);
            let lh = g.matmul(left, h);
            let loss = g.matmul(lh, right);
            g.status()?;
            if let Some(gr) = grads {
                g.backward(loss, gr);
            }
            Ok(g.value(loss).data()[0])
        },
        1e-5,
        1e-8,
        None,
        0,
    )
    .unwrap();
    assert!(report.coordinates > 0, "{name}: nothing checked");
    assert!(report.max_rel_error < 1e-4, "{name}: {report:?}");
}

fn store_with(mats: Vec<Mat<f64>>) -> (ParamStore<f64>, Vec<ParamId>) {
    let mut store = ParamStore::new();
    let ids = mats.into_iter().enumerate().map(|(i, m)| store.add(format!("p{i}"), m)).collect();
    (store, ids)
}

#[test]
fn dense_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (s, id) = store_with(vec![random(&mut rng, 5, 3)]);
    check("gather", &s, false, |g| g.gather(id[0], vec![0, 2, 2, 4]));

    for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
        let a = if ta { random(&mut rng, 4, 3) } else { random(&mut rng, 3, 4) };
        let b = if tb { random(&mut rng, 2, 4) } else { random(&mut rng, 4, 2) };
        let (s, id) = store_with(vec![a, b]);
        check("matmul", &s, false, |g| {
            let (a, b) = (g.param(id[0]), g.param(id[1]));
            g.matmul_t(a, ta, b, tb)
        });
    }

    let (s, id) = store_with(vec![random(&mut rng, 3, 4), random(&mut rng, 3, 4), random(&mut rng, 1, 4)]);
    check("add", &s, false, |g| {
        let (a, b) = (g.param(id[0]), g.param(id[1]));
        g.add(a, b)
    });
    check("add_row", &s, false, |g| {
        let (a, b) = (g.param(id[0]), g.param(id[2]));
        g.add_row(a, b)
    });
    check("scale", &s, false, |g| {
        let a = g.param(id[0]);
        g.scale(a, -1.7)
    });
    check("gelu", &s, false, |g| {
        let a = g.param(id[0]);
        g.gelu(a)
    });

    let mut gain = random(&mut rng, 1, 4);
    gain.data_mut().iter_mut().for_each(|v| *v += 1.5);
    let (s, id) = store_with(vec![random(&mut rng, 3, 4), gain, random(&mut rng, 1, 4)]);
    check("layer_norm", &s, false, |g| {
        let (x, a, b) = (g.param(id[0]), g.param(id[1]), g.param(id[2]));
        g.layer_norm(x, a, b)
    });
}

#[test]
fn softmax_and_dropout() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (s, id) = store_with(vec![random(&mut rng, 4, 4)]);
    let masks = [
        SoftmaxMask::none(),
        SoftmaxMask {
            valid_cols: Some(vec![true, false, true, true]),
            causal: false,
        },
        SoftmaxMask {
            valid_cols: Some(vec![true, true, true, false]),
            causal: true,
        },
    ];
    for mask in &masks {
        check("softmax_rows", &s, false, |g| {
            let x = g.param(id[0]);
            g.softmax_rows(x, mask)
        });
    }
    check("dropout", &s, true, |g| {
        let x = g.param(id[0]);
        g.dropout(x, 0.3)
    });
}

#[test]
fn layout_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (s, id) = store_with(vec![random(&mut rng, 3, 2), random(&mut rng, 3, 3), random(&mut rng, 5, 4)]);
    check("concat_cols", &s, false, |g| {
        let (a, b) = (g.param(id[0]), g.param(id[1]));
        g.concat_cols(&[a, b, a])
    });
    check("slice_cols", &s, false, |g| {
        let x = g.param(id[2]);
        g.slice_cols(x, 1, 2)
    });
    check("slice_rows", &s, false, |g| {
        let x = g.param(id[2]);
        g.slice_rows(x, 2, 3)
    });
    check("sum_all", &s, false, |g| {
        let (a, b) = (g.param(id[0]), g.param(id[1]));
        g.sum_all(&[a, b])
    });
}

#[test]
fn edge_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let edges = Rc::new(EdgeList {
        n: 4,
        relations: 3,
        edges: vec![(0, 1, 2), (2, 1, 0), (1, 0, 3), (3, 2, 1), (0, 2, 2), (2, 0, 2)],
    });
    let (s, id) = store_with(vec![random(&mut rng, 4, 3), random(&mut rng, 4, 4)]);
    check("edge_scores", &s, false, |g| {
        let x = g.param(id[0]);
        g.edge_scores(x, &edges)
    });
    check("edge_collect", &s, false, |g| {
        let x = g.param(id[1]);
        g.edge_collect(x, &edges)
    });
}

#[test]
fn reasoning_ops() {
    // The check closure accepts a graph of any lifetime.
    let kg: &'static _ = Box::leak(Box::new(toy_graph()));
    let view: &'static _ = Box::leak(Box::new(kg.view(Some(kgrule::kg::Triplet::new(0, 0, 1)))));
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (s, id) = store_with(vec![positive(&mut rng, 1, 5), positive(&mut rng, 1, 5)]);
    check("mix", &s, false, |g| {
        let (z, w) = (g.param(id[0]), g.param(id[1]));
        let once = g.mix(z, w, view);
        g.mix(once, w, view)
    });
    check("log_clamp_pick", &s, false, |g| {
        let z = g.param(id[0]);
        g.log_clamp_pick(z, 3, 1e-20)
    });
    check("normalize_l1", &s, false, |g| {
        let z = g.param(id[0]);
        g.normalize_l1(z, 1e-20)
    });
    check("normalize_l1 below floor", &s, false, |g| {
        let z = g.param(id[0]);
        g.normalize_l1(z, 100.0)
    });
}
