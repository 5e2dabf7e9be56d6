//! MLP encoders with unit-norm outputs, hand-written backpropagation,
//! optimizers and the momentum (EMA) encoder.

pub mod checkpoint;
mod mlp;
mod optim;

pub use mlp::{
    loss_and_grad, nce_loss, parameter_count, set_ratio_loss, similarity, Embedding, EmbeddingLoss, ForwardCache, Mlp,
};
pub use optim::{momentum_update, MomentumEncoder, Optimizer, OptimizerKind};

#[cfg(test)]
mod gradient_check {
    use super::*;
    use crate::numerics::Rng;

    /// Central differences of `loss_and_grad`'s loss with respect to each parameter.
    fn numeric_grad(mlp: &Mlp, x: &[f64], pos: &[f64], negs: &[&[f64]], tau: f64, h: f64) -> Vec<f64> {
        (0..mlp.params().len())
            .map(|i| {
                let mut plus = mlp.clone();
                plus.params_mut()[i] += h;
                let mut minus = mlp.clone();
                minus.params_mut()[i] -= h;
                let lp = loss_and_grad(&plus, x, pos, negs, tau).unwrap().0;
                let lm = loss_and_grad(&minus, x, pos, negs, tau).unwrap().0;
                (lp - lm) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let mut rng = Rng::new(100 + seed);
            let mlp = Mlp::new(&[3, 4, 4, 4], &mut rng).unwrap();
            let x: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
            let pos = rng.unit_vector(4);
            let negs: Vec<Vec<f64>> = (0..6).map(|_| rng.unit_vector(4)).collect();
            let neg_refs: Vec<&[f64]> = negs.iter().map(Vec::as_slice).collect();
            let tau = 0.5;
            let (_, analytic) = loss_and_grad(&mlp, &x, &pos, &neg_refs, tau).unwrap();
            let numeric = numeric_grad(&mlp, &x, &pos, &neg_refs, tau, 1e-6);
            for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
                let scale = a.abs().max(n.abs());
                assert!(
                    (a - n).abs() <= 1e-5 * scale + 1e-9,
                    "seed {seed} param {i}: analytic {a} vs numeric {n}"
                );
            }
        }
    }

    #[test]
    fn set_ratio_gradient_matches_finite_differences() {
        let mut rng = Rng::new(77);
        let mlp = Mlp::new(&[2, 5, 3], &mut rng).unwrap();
        let x = [0.3, -1.2];
        let vs: Vec<Vec<f64>> = (0..5).map(|_| rng.unit_vector(3)).collect();
        let num: Vec<&[f64]> = vs[..2].iter().map(Vec::as_slice).collect();
        let den: Vec<&[f64]> = vs.iter().map(Vec::as_slice).collect();
        let tau = 0.3;
        let loss_at = |m: &Mlp| set_ratio_loss(&m.forward(&x).unwrap(), &num, &den, tau).unwrap().loss;
        let (z, cache) = mlp.forward_cached(&x).unwrap();
        let analytic = mlp.backward(&cache, &set_ratio_loss(&z, &num, &den, tau).unwrap().grad);
        for i in 0..mlp.params().len() {
            let h = 1e-6;
            let mut p = mlp.clone();
            p.params_mut()[i] += h;
            let mut m = mlp.clone();
            m.params_mut()[i] -= h;
            let n = (loss_at(&p) - loss_at(&m)) / (2.0 * h);
            let a = analytic[i];
            assert!((a - n).abs() <= 1e-5 * a.abs().max(n.abs()) + 1e-9, "param {i}: {a} vs {n}");
        }
    }

    #[test]
    fn loss_shift_invariance_on_logits() {
        // shifting every logit by the same constant leaves the mean-normalized term unchanged
        let pos = 0.8;
        let negs = [0.1, -0.3, 0.5];
        let term = |p: f64, n: &[f64]| {
            let mut all = vec![p];
            all.extend_from_slice(n);
            p - crate::numerics::logsumexp(&all).unwrap() + (all.len() as f64).ln()
        };
        for c in [-5.0, 0.0, 3.7, 100.0] {
            let shifted: Vec<f64> = negs.iter().map(|v| v + c).collect();
            assert!((term(pos + c, &shifted) - term(pos, &negs)).abs() < 1e-12);
        }
    }
}
