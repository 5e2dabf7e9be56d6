use crate::error::{Error, Result};

use super::Mlp;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        Self::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Optimizer hyperparameters plus per-parameter accumulators.
///
/// Weight decay is an L2 term added to the gradient before any momentum.
#[derive(Clone, Debug)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub weight_decay: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, weight_decay: f64, num_params: usize) -> Self {
        let second = match kind {
            OptimizerKind::Adam { .. } => vec![0.0; num_params],
            OptimizerKind::SgdMomentum { .. } => Vec::new(),
        };
        Self { kind, learning_rate, weight_decay, first: vec![0.0; num_params], second, steps: 0 }
    }

    pub fn sgd(learning_rate: f64, momentum: f64, weight_decay: f64, num_params: usize) -> Self {
        Self::new(OptimizerKind::SgdMomentum { momentum }, learning_rate, weight_decay, num_params)
    }

    pub fn adam(learning_rate: f64, num_params: usize) -> Self {
        Self::new(OptimizerKind::adam(), learning_rate, 0.0, num_params)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first.len() {
            return Err(Error::DimensionMismatch { expected: self.first.len(), got: grads.len() });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        self.steps += 1;
        let lr = self.learning_rate;
        let wd = self.weight_decay;
        match self.kind {
            OptimizerKind::SgdMomentum { momentum } => {
                for ((p, g), buf) in params.iter_mut().zip(grads).zip(&mut self.first) {
                    let g = g + wd * *p;
                    *buf = momentum * *buf + g;
                    *p -= lr * *buf;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
                    let g = g + wd * *p;
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

/// Exponential moving average copy of an encoder, `θ' ← mθ' + (1 − m)θ`.
///
/// It never receives gradients.
#[derive(Clone, Debug)]
pub struct MomentumEncoder {
    mlp: Mlp,
    pub m: f64,
}

impl MomentumEncoder {
    pub fn new(source: &Mlp, m: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&m) {
            return Err(Error::InvalidParameter(format!("momentum {m} outside [0, 1]")));
        }
        Ok(Self { mlp: source.clone(), m })
    }

    pub fn encoder(&self) -> &Mlp {
        &self.mlp
    }

    pub fn update(&mut self, online: &Mlp) -> Result<()> {
        momentum_update(&mut self.mlp, online, self.m)
    }
}

pub fn momentum_update(target: &mut Mlp, online: &Mlp, m: f64) -> Result<()> {
    if target.dims() != online.dims() {
        return Err(Error::DimensionMismatch { expected: target.params().len(), got: online.params().len() });
    }
    for (t, s) in target.params_mut().iter_mut().zip(online.params()) {
        *t = m * *t + (1.0 - m) * s;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn zero_learning_rate_is_identity() {
        for mut opt in [Optimizer::sgd(0.0, 0.9, 1e-4, 3), Optimizer::adam(0.0, 3)] {
            let mut p = vec![1.0, -2.0, 0.5];
            opt.step(&mut p, &[0.3, 0.1, -7.0]).unwrap();
            assert_eq!(p, vec![1.0, -2.0, 0.5]);
        }
    }

    #[test]
    fn plain_sgd_step() {
        let mut opt = Optimizer::sgd(0.1, 0.0, 0.0, 1);
        let mut p = vec![0.0];
        opt.step(&mut p, &[1.0]).unwrap();
        assert!((p[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn sgd_momentum_and_decay_by_hand() {
        let mut opt = Optimizer::sgd(0.1, 0.9, 0.5, 1);
        let mut p = vec![1.0];
        // g' = 1 + 0.5 = 1.5, buf = 1.5, p = 1 − 0.15
        opt.step(&mut p, &[1.0]).unwrap();
        assert!((p[0] - 0.85).abs() < 1e-15);
        // g' = 1 + 0.425 = 1.425, buf = 0.9·1.5 + 1.425 = 2.775, p = 0.85 − 0.2775
        opt.step(&mut p, &[1.0]).unwrap();
        assert!((p[0] - 0.5725).abs() < 1e-14);
    }

    #[test]
    fn adam_first_step_by_hand() {
        // m = 0.1g, v = 0.001g², m̂ = g, v̂ = g²; step = lr·g/(|g| + eps)
        let lr = 0.03;
        let g = 0.25;
        let mut opt = Optimizer::adam(lr, 1);
        let mut p = vec![1.0];
        opt.step(&mut p, &[g]).unwrap();
        let expected = 1.0 - lr * g / (g + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!(((1.0 - p[0]) - lr).abs() < 1e-8);
    }

    #[test]
    fn nan_gradient_fails_fast() {
        let mut opt = Optimizer::adam(0.1, 2);
        let mut p = vec![0.0, 0.0];
        assert!(opt.step(&mut p, &[0.0, f64::NAN]).is_err());
        assert_eq!(p, vec![0.0, 0.0]);
    }

    #[test]
    fn momentum_update_examples() {
        let online = Mlp::from_params(&[1, 1], vec![1.0, 1.0]).unwrap();
        let zero = Mlp::zeros(&[1, 1]).unwrap();

        let mut t = zero.clone();
        momentum_update(&mut t, &online, 1.0).unwrap();
        assert_eq!(t, zero);

        let mut t = zero.clone();
        momentum_update(&mut t, &online, 0.0).unwrap();
        assert_eq!(t, online);

        let mut t = zero.clone();
        momentum_update(&mut t, &online, 0.999).unwrap();
        assert!(t.params().iter().all(|p| (p - 0.001).abs() < 1e-15));
    }

    #[test]
    fn momentum_update_contracts_toward_online() {
        let mut rng = Rng::new(4);
        let online = Mlp::new(&[3, 5, 2], &mut rng).unwrap();
        let mut target = Mlp::new(&[3, 5, 2], &mut rng).unwrap();
        let dist = |a: &Mlp, b: &Mlp| {
            a.params().iter().zip(b.params()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        };
        let m = 0.7;
        let before = dist(&target, &online);
        momentum_update(&mut target, &online, m).unwrap();
        assert!((dist(&target, &online) - m * before).abs() < 1e-12);
    }

    #[test]
    fn momentum_encoder_rejects_bad_coefficient() {
        let online = Mlp::zeros(&[1, 1]).unwrap();
        assert!(MomentumEncoder::new(&online, 1.5).is_err());
    }
}
