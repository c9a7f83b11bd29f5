use ndarray::{Array2, Zip};

use super::params::ParamStore;

/// Adam with bias-corrected moments.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(params: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Array2<f64>> = params
            .ids()
            .map(|id| Array2::zeros(params.get(id).dim()))
            .collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut ParamStore, grads: &[Array2<f64>]) {
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for ((id, g), (m, v)) in params
            .ids()
            .collect::<Vec<_>>()
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let p = params.get_mut(id);
            Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let mh = *m / bc1;
                    let vh = *v / bc2;
                    *p -= lr * mh / (vh.sqrt() + eps);
                });
        }
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Array2<f64>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .map(|g| g.iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let c = max_norm / norm;
        for g in grads.iter_mut() {
            g.mapv_inplace(|x| x * c);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut ps = ParamStore::new();
        let id = ps.add("w", array![[1.0, -1.0]]);
        let mut opt = Adam::new(&ps, 0.1);
        opt.update(&mut ps, &[array![[2.0, -3.0]]]);
        // bias-corrected first step is lr * sign(g)
        let w = ps.get(id);
        assert!((w[[0, 0]] - 0.9).abs() < 1e-6);
        assert!((w[[0, 1]] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut ps = ParamStore::new();
        let id = ps.add("w", array![[3.0]]);
        let mut opt = Adam::new(&ps, 0.05);
        for _ in 0..2000 {
            let g = ps.get(id).mapv(|x| 2.0 * (x - 1.0));
            opt.update(&mut ps, &[g]);
        }
        assert!((ps.get(id)[[0, 0]] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut g = vec![array![[3.0, 4.0]]];
        let before = clip_global_norm(&mut g, 1.0);
        assert_eq!(before, 5.0);
        assert!((g[0][[0, 0]] - 0.6).abs() < 1e-12);
        let mut small = vec![array![[0.3]]];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small[0][[0, 0]], 0.3);
    }
}
