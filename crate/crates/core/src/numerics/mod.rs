//! Dense/sparse kernels, the reverse-mode tape, and optimization utilities.

mod checkpoint;
mod gradcheck;
mod graph;
mod optim;
mod params;
mod sparse;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_TAG};
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{EdgeList, Graph, RelationOperator, SoftmaxMask, Var};
pub use optim::{Adam, AdamConfig};
pub use params::{Grads, ParamId, ParamStore};
pub use sparse::SparseRelationMatrix;
pub use tensor::{Mat, Real};

/// Max-shifted softmax; accumulation runs in `f64`.
pub fn softmax<F: Real>(v: &[F]) -> Vec<F> {
    let max = v.iter().map(|x| x.f64()).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x.f64() - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| F::of(e / total)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform() {
        for p in softmax(&[0.0f64, 0.0, 0.0]) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_large_logits_do_not_overflow() {
        let p = softmax(&[1000.0f64, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1] >= 0.0 && p[1] < 1e-300);
    }

    #[test]
    fn softmax_ln2() {
        let p = softmax(&[2f64.ln(), 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }
}
