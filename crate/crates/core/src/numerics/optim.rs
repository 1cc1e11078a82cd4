use super::{Grads, Mat, ParamStore, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected adaptive-moment optimizer state for one parameter store.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<Mat<F>>,
    pub second: Vec<Mat<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(store: &ParamStore<F>, config: AdamConfig) -> Self {
        let zeros: Vec<Mat<F>> = store.iter().map(|(_, _, m)| Mat::zeros(m.rows(), m.cols())).collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// One update. Parameters without a gradient buffer are treated as
    /// having zero gradient (their moments still decay).
    pub fn step(&mut self, store: &mut ParamStore<F>, grads: &Grads<F>) {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (F::of(c.beta1), F::of(c.beta2));
        let (ob1, ob2) = (F::of(1.0 - c.beta1), F::of(1.0 - c.beta2));
        for id in store.ids().collect::<Vec<_>>() {
            let i = id.index();
            let g = grads.get(id);
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let p = store.get_mut(id).data_mut();
            for k in 0..p.len() {
                let gk = g.map_or(F::zero(), |g| g.data()[k]);
                m[k] = b1 * m[k] + ob1 * gk;
                v[k] = b2 * v[k] + ob2 * gk * gk;
                if c.lr == 0.0 {
                    continue;
                }
                let mhat = m[k].f64() / bc1;
                let vhat = v[k].f64() / bc2;
                let upd = c.lr * mhat / (vhat.sqrt() + c.eps);
                if upd != 0.0 {
                    p[k] -= F::of(upd);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(x: f64) -> (ParamStore<f64>, super::super::ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("x", Mat::scalar(x));
        (s, id)
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let (mut s, id) = store(1.5);
        let mut adam = Adam::new(&s, AdamConfig::default());
        let mut g = Grads::for_store(&s);
        g.accumulate(id, &Mat::scalar(0.0));
        adam.step(&mut s, &g);
        assert_eq!(s.get(id).data()[0], 1.5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (mut s, id) = store(0.0);
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(&s, cfg);
        let mut g = Grads::for_store(&s);
        g.accumulate(id, &Mat::scalar(3.0));
        adam.step(&mut s, &g);
        // m̂ = g, v̂ = g², so the step is lr·g/(|g|+eps)
        let expect = -0.01 * 3.0 / (3.0 + 1e-8);
        assert!((s.get(id).data()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn second_moment_grows() {
        let (mut s, id) = store(0.0);
        let mut adam = Adam::new(&s, AdamConfig::default());
        let mut g = Grads::for_store(&s);
        g.accumulate(id, &Mat::scalar(0.5));
        adam.step(&mut s, &g);
        let v1 = adam.second[0].data()[0];
        adam.step(&mut s, &g);
        assert!(adam.second[0].data()[0] > v1);
    }
}
