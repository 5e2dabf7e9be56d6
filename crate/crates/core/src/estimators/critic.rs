use rayon::prelude::*;

use crate::encoder::{Mlp, Optimizer};
use crate::error::{Error, Result};
use crate::gaussian_toy::PairDataset;
use crate::numerics::{dot, logsumexp, softmax, Matrix, Rng};

/// Separable critic `f(u, v) = g_u(u)ᵀ g_v(v) / τ` built from two encoders.
#[derive(Clone, Debug)]
pub struct PairCritic {
    pub enc_u: Mlp,
    pub enc_v: Mlp,
    pub tau: f64,
}

impl PairCritic {
    pub fn new(enc_u: Mlp, enc_v: Mlp, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!("temperature must be positive, got {tau}")));
        }
        if enc_u.output_dim() != enc_v.output_dim() {
            return Err(Error::DimensionMismatch { expected: enc_u.output_dim(), got: enc_v.output_dim() });
        }
        Ok(Self { enc_u, enc_v, tau })
    }

    /// A critic whose encoders ignore their input, so `f` is the same constant
    /// for every pair.
    pub fn constant(hidden: &[usize], out_dim: usize, tau: f64) -> Result<Self> {
        let mut dims = vec![1];
        dims.extend_from_slice(hidden);
        dims.push(out_dim);
        let mut enc = Mlp::zeros(&dims)?;
        let last = enc.num_layers() - 1;
        enc.layer_mut(last).1[0] = 1.0;
        Self::new(enc.clone(), enc, tau)
    }

    fn embed(enc: &Mlp, values: &[f64]) -> Result<Matrix> {
        let rows = values.iter().map(|v| enc.forward(&[*v]).map(|e| e.into_vec())).collect::<Result<Vec<_>>>()?;
        Matrix::from_rows(&rows)
    }

    /// All pairwise scores `f(x_i, y_j)` over a dataset.
    pub fn score_matrix(&self, data: &PairDataset) -> Result<ScoreMatrix> {
        let us = Self::embed(&self.enc_u, &data.xs)?;
        let vs = Self::embed(&self.enc_v, &data.ys)?;
        ScoreMatrix::from_embeddings(&us, &vs, self.tau)
    }
}

/// Square score table; row `i` holds `f(u_i, v_j)` and `(i, i)` is the positive pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    n: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn from_embeddings(us: &Matrix, vs: &Matrix, tau: f64) -> Result<Self> {
        if us.rows() != vs.rows() || us.cols() != vs.cols() {
            return Err(Error::DimensionMismatch { expected: us.rows(), got: vs.rows() });
        }
        let n = us.rows();
        let data: Vec<f64> =
            (0..n).into_par_iter().flat_map_iter(|i| (0..n).map(move |j| dot(us.row(i), vs.row(j)) / tau)).collect();
        Ok(Self { n, data })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| f(i, j)).collect();
        Self { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn positive(&self, i: usize) -> f64 {
        self.data[i * self.n + i]
    }
}

/// Per-anchor negative-candidate scores sorted ascending, anchor's own pair removed.
#[derive(Clone, Debug)]
pub struct RankedScores {
    positives: Vec<f64>,
    sorted: Vec<Vec<f64>>,
}

impl RankedScores {
    pub fn new(scores: &ScoreMatrix) -> Self {
        let n = scores.len();
        let sorted = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row: Vec<f64> =
                    scores.row(i).iter().enumerate().filter(|(j, _)| *j != i).map(|(_, s)| *s).collect();
                row.sort_by(f64::total_cmp);
                row
            })
            .collect();
        let positives = (0..n).map(|i| scores.positive(i)).collect();
        Self { positives, sorted }
    }

    pub fn anchors(&self) -> usize {
        self.positives.len()
    }

    /// Negative candidates per anchor (`n − 1`).
    pub fn candidates(&self) -> usize {
        self.sorted.first().map_or(0, Vec::len)
    }

    pub fn positive(&self, i: usize) -> f64 {
        self.positives[i]
    }

    pub fn sorted(&self, i: usize) -> &[f64] {
        &self.sorted[i]
    }
}

/// Training settings for the two-encoder critic on scalar pairs.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct CriticTraining {
    pub hidden: Vec<usize>,
    pub out_dim: usize,
    pub tau: f64,
    pub learning_rate: f64,
    pub batch: usize,
    pub epochs: usize,
}

impl Default for CriticTraining {
    fn default() -> Self {
        Self { hidden: vec![10, 10, 10, 10], out_dim: 10, tau: 0.5, learning_rate: 0.03, batch: 128, epochs: 100 }
    }
}

fn dims(hidden: &[usize], out: usize) -> Vec<usize> {
    let mut d = vec![1];
    d.extend_from_slice(hidden);
    d.push(out);
    d
}

/// Symmetric in-batch NCE over a `b × b` score table: row `i` contrasts
/// `u_i` against every `v_j`, column `j` contrasts `v_j` against every `u_i`.
/// Returns the mean loss and `∂loss/∂s_ij`.
fn batch_loss(scores: &Matrix) -> Result<(f64, Matrix)> {
    let b = scores.rows();
    let mut coef = Matrix::zeros(b, b);
    let mut loss = 0.0;
    let scale = 1.0 / (2 * b) as f64;
    for i in 0..b {
        let row = scores.row(i);
        let col: Vec<f64> = (0..b).map(|k| scores.get(k, i)).collect();
        let (pr, pc) = (softmax(row), softmax(&col));
        loss += (logsumexp(row)? - row[i]) + (logsumexp(&col)? - col[i]);
        for j in 0..b {
            let delta = if i == j { 1.0 } else { 0.0 };
            coef.set(i, j, coef.get(i, j) + scale * (pr[j] - delta));
            coef.set(j, i, coef.get(j, i) + scale * (pc[j] - delta));
        }
    }
    Ok((loss * scale, coef))
}

/// Trains `g_u` and `g_v` with Adam on the symmetric NCE objective, using the
/// other pairs of each minibatch as negatives so both encoders receive
/// gradient through positives and negatives alike.
pub fn fit_pair_critic(data: &PairDataset, cfg: &CriticTraining, rng: &mut Rng) -> Result<PairCritic> {
    if cfg.batch < 2 {
        return Err(Error::InvalidParameter(format!("batch must be at least 2, got {}", cfg.batch)));
    }
    let d = dims(&cfg.hidden, cfg.out_dim);
    let mut enc_u = Mlp::new(&d, rng)?;
    let mut enc_v = Mlp::new(&d, rng)?;
    let mut opt_u = Optimizer::adam(cfg.learning_rate, enc_u.params().len());
    let mut opt_v = Optimizer::adam(cfg.learning_rate, enc_v.params().len());
    let tau = cfg.tau;

    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch).filter(|c| c.len() >= 2) {
            let fu = batch.iter().map(|&i| enc_u.forward_cached(&[data.xs[i]])).collect::<Result<Vec<_>>>()?;
            let fv = batch.iter().map(|&i| enc_v.forward_cached(&[data.ys[i]])).collect::<Result<Vec<_>>>()?;
            let b = batch.len();
            let mut scores = Matrix::zeros(b, b);
            for i in 0..b {
                for j in 0..b {
                    scores.set(i, j, dot(&fu[i].0, &fv[j].0) / tau);
                }
            }
            let (loss, coef) = batch_loss(&scores)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, detail: "non-finite critic loss".into() });
            }
            let mut grad_u = vec![0.0; enc_u.params().len()];
            let mut grad_v = vec![0.0; enc_v.params().len()];
            let mut g = vec![0.0; cfg.out_dim];
            for i in 0..b {
                g.iter_mut().for_each(|x| *x = 0.0);
                for j in 0..b {
                    let c = coef.get(i, j) / tau;
                    g.iter_mut().zip(fv[j].0.iter()).for_each(|(a, v)| *a += c * v);
                }
                enc_u.backward_into(&fu[i].1, &g, &mut grad_u);
                g.iter_mut().for_each(|x| *x = 0.0);
                for k in 0..b {
                    let c = coef.get(k, i) / tau;
                    g.iter_mut().zip(fu[k].0.iter()).for_each(|(a, u)| *a += c * u);
                }
                enc_v.backward_into(&fv[i].1, &g, &mut grad_v);
            }
            opt_u.step(enc_u.params_mut(), &grad_u)?;
            opt_v.step(enc_v.params_mut(), &grad_v)?;
        }
    }
    PairCritic::new(enc_u, enc_v, tau)
}
