use crate::error::{Error, Result};
use crate::numerics::{dot, l2_norm, Rng};

/// Unit-norm output of an encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalizes `raw`; zero vectors are rejected.
    pub fn from_raw(raw: &[f64]) -> Result<Self> {
        crate::numerics::normalized(raw).map(Self)
    }

    /// Wraps a vector that is already unit norm (checked to 1e-6).
    pub fn from_unit(v: Vec<f64>) -> Result<Self> {
        let n = l2_norm(&v);
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!("embedding norm {n} is not 1")));
        }
        Ok(Self(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for Embedding {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// `aᵀb / τ`.
pub fn similarity(a: &[f64], b: &[f64], tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("temperature must be positive, got {tau}")));
    }
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    Ok(dot(a, b) / tau)
}

/// Fully connected ReLU network whose output is L2-normalized.
///
/// Parameters live in one flat vector: for each layer the `out × in` weight
/// matrix (row-major) followed by its `out` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Intermediate values from a forward pass, consumed by [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each layer.
    pre: Vec<Vec<f64>>,
    norm: f64,
    embedding: Vec<f64>,
}

pub fn parameter_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// He-uniform weights, zero biases.
    pub fn new(dims: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut mlp = Self::zeros(dims)?;
        let mut offset = 0;
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            for p in &mut mlp.params[offset..offset + fan_in * fan_out] {
                *p = rng.uniform_range(-bound, bound);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(mlp)
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidParameter(format!("invalid layer dims {dims:?}")));
        }
        Ok(Self { dims: dims.to_vec(), params: vec![0.0; parameter_count(dims)] })
    }

    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut mlp = Self::zeros(dims)?;
        if params.len() != mlp.params.len() {
            return Err(Error::DimensionMismatch { expected: mlp.params.len(), got: params.len() });
        }
        mlp.params = params;
        Ok(mlp)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("at least two dims")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    /// `(weight offset, bias offset)` of layer `l`.
    fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let w = parameter_count(&self.dims[..=l]);
        (w, w + self.dims[l] * self.dims[l + 1])
    }

    /// Slice views of layer `l`'s weights and biases.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (w, b) = self.layer_offsets(l);
        let out = self.dims[l + 1];
        (&self.params[w..b], &self.params[b..b + out])
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let (w, b) = self.layer_offsets(l);
        let out = self.dims[l + 1];
        let (weights, rest) = self.params[w..b + out].split_at_mut(b - w);
        (weights, rest)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Embedding> {
        self.forward_cached(x).map(|(e, _)| e)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<(Embedding, ForwardCache)> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        let layers = self.num_layers();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        let mut h = x.to_vec();
        for l in 0..layers {
            let (w, b) = self.layer(l);
            let d_in = self.dims[l];
            let z: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, bias)| bias + dot(&w[o * d_in..(o + 1) * d_in], &h))
                .collect();
            let next = if l + 1 < layers { z.iter().map(|v| v.max(0.0)).collect() } else { z.clone() };
            inputs.push(std::mem::replace(&mut h, next));
            pre.push(z);
        }
        let norm = l2_norm(&h);
        if !norm.is_finite() {
            return Err(Error::NonFinite("encoder output"));
        }
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let embedding: Vec<f64> = h.iter().map(|v| v / norm).collect();
        let cache = ForwardCache { inputs, pre, norm, embedding: embedding.clone() };
        Ok((Embedding(embedding), cache))
    }

    /// Gradient of a scalar loss w.r.t. all parameters, given `∂loss/∂embedding`.
    pub fn backward(&self, cache: &ForwardCache, grad_embedding: &[f64]) -> Vec<f64> {
        let mut grads = vec![0.0; self.params.len()];
        self.backward_into(cache, grad_embedding, &mut grads);
        grads
    }

    /// Accumulates (adds) the parameter gradient into `grads`.
    pub fn backward_into(&self, cache: &ForwardCache, grad_embedding: &[f64], grads: &mut [f64]) {
        // through the normalization: (I − z zᵀ) g / ‖h‖
        let z = &cache.embedding;
        let proj = dot(z, grad_embedding);
        let mut delta: Vec<f64> =
            grad_embedding.iter().zip(z).map(|(g, zi)| (g - proj * zi) / cache.norm).collect();

        for l in (0..self.num_layers()).rev() {
            let d_in = self.dims[l];
            let input = &cache.inputs[l];
            let (w_off, b_off) = self.layer_offsets(l);
            for (o, d) in delta.iter().enumerate() {
                grads[b_off + o] += d;
                let row = &mut grads[w_off + o * d_in..w_off + (o + 1) * d_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            if l == 0 {
                break;
            }
            let (w, _) = self.layer(l);
            let prev_pre = &cache.pre[l - 1];
            delta = (0..d_in)
                .map(|i| {
                    if prev_pre[i] <= 0.0 {
                        return 0.0;
                    }
                    delta.iter().enumerate().map(|(o, d)| d * w[o * d_in + i]).sum()
                })
                .collect();
        }
    }
}

/// Loss value with its gradient w.r.t. the anchor embedding.
#[derive(Clone, Debug)]
pub struct EmbeddingLoss {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Negated mean-normalized NCE term for an anchor embedding `z` against a
/// detached positive and detached negatives:
/// `-(s⁺ − logsumexp(s⁺ ∪ s⁻) + ln(k+1))` with `s = zᵀv / τ`.
pub fn nce_loss(z: &[f64], positive: &[f64], negatives: &[&[f64]], tau: f64) -> Result<EmbeddingLoss> {
    if negatives.is_empty() {
        return Err(Error::NoNegatives("contrastive loss needs at least one negative".into()));
    }
    let mut candidates: Vec<&[f64]> = Vec::with_capacity(negatives.len() + 1);
    candidates.push(positive);
    candidates.extend_from_slice(negatives);
    let sims = candidates.iter().map(|v| similarity(z, v, tau)).collect::<Result<Vec<f64>>>()?;
    let lse = crate::numerics::logsumexp(&sims)?;
    let loss = -(sims[0] - lse + ((candidates.len()) as f64).ln());
    let weights = crate::numerics::softmax(&sims);
    let mut grad = vec![0.0; z.len()];
    for (j, (v, p)) in candidates.iter().zip(&weights).enumerate() {
        let coef = (p - if j == 0 { 1.0 } else { 0.0 }) / tau;
        for (g, vi) in grad.iter_mut().zip(v.iter()) {
            *g += coef * vi;
        }
    }
    Ok(EmbeddingLoss { loss, grad })
}

/// Negated log-ratio of mean-exp similarities over a numerator set and a
/// denominator set: `-(log mean_C e^{s} − log mean_B e^{s})`.
pub fn set_ratio_loss(z: &[f64], numerator: &[&[f64]], denominator: &[&[f64]], tau: f64) -> Result<EmbeddingLoss> {
    if numerator.is_empty() || denominator.is_empty() {
        return Err(Error::Empty("set ratio loss needs nonempty sets"));
    }
    let sims = |set: &[&[f64]]| set.iter().map(|v| similarity(z, v, tau)).collect::<Result<Vec<f64>>>();
    let num = sims(numerator)?;
    let den = sims(denominator)?;
    let value = crate::numerics::logsumexp(&num)? - (num.len() as f64).ln() - crate::numerics::logsumexp(&den)?
        + (den.len() as f64).ln();
    let mut grad = vec![0.0; z.len()];
    for (set, w, sign) in [(numerator, crate::numerics::softmax(&num), -1.0), (denominator, crate::numerics::softmax(&den), 1.0)] {
        for (v, p) in set.iter().zip(&w) {
            let coef = sign * p / tau;
            for (g, vi) in grad.iter_mut().zip(v.iter()) {
                *g += coef * vi;
            }
        }
    }
    Ok(EmbeddingLoss { loss: -value, grad })
}

/// Loss and parameter gradient for one anchor. Gradients flow only through the
/// anchor branch; `positive` and `negatives` are treated as constants.
pub fn loss_and_grad(
    mlp: &Mlp,
    anchor_input: &[f64],
    positive: &[f64],
    negatives: &[&[f64]],
    tau: f64,
) -> Result<(f64, Vec<f64>)> {
    if negatives.is_empty() {
        return Err(Error::NoNegatives("contrastive loss needs at least one negative".into()));
    }
    let (z, cache) = mlp.forward_cached(anchor_input)?;
    let l = nce_loss(&z, positive, negatives, tau)?;
    Ok((l.loss, mlp.backward(&cache, &l.grad)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_formula() {
        let mlp = Mlp::new(&[1, 10, 10, 10, 10, 8], &mut Rng::new(0)).unwrap();
        assert_eq!(mlp.params().len(), 20 + 110 * 3 + 88);
    }

    #[test]
    fn zero_network_cannot_normalize() {
        let mlp = Mlp::zeros(&[3, 4, 2]).unwrap();
        assert!(matches!(mlp.forward(&[1.0, 2.0, 3.0]), Err(Error::ZeroNorm)));
    }

    #[test]
    fn single_linear_layer_by_hand() {
        // W = [[1, 0], [2, 0], [2, 0]]: input e₁ maps to the first column (1, 2, 2), norm 3
        let mlp = Mlp::from_params(&[2, 3], vec![1.0, 0.0, 2.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let e = mlp.forward(&[1.0, 0.0]).unwrap();
        let expected = [1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0];
        for (a, b) in e.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn outputs_are_unit_norm_and_deterministic() {
        let mut rng = Rng::new(11);
        let mlp = Mlp::new(&[4, 16, 16, 5], &mut rng).unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            let a = mlp.forward(&x).unwrap();
            assert!((l2_norm(&a) - 1.0).abs() < 1e-9);
            assert_eq!(a, mlp.forward(&x).unwrap());
        }
    }

    #[test]
    fn input_dimension_checked() {
        let mlp = Mlp::new(&[2, 3], &mut Rng::new(0)).unwrap();
        assert!(matches!(mlp.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn similarity_examples() {
        let z = Embedding::from_raw(&[1.0, 1.0, 0.0]).unwrap();
        assert!((similarity(&z, &z, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(similarity(&[1.0, 0.0], &[0.0, 1.0], 1.0).unwrap(), 0.0);
        assert!((similarity(&z, &z, 0.07).unwrap() - 1.0 / 0.07).abs() < 1e-12);
        assert!(similarity(&z, &z, 0.0).is_err());
        assert!(similarity(&z, &z, -1.0).is_err());
    }

    #[test]
    fn nce_loss_single_negative_by_hand() {
        // s⁺ = 1, s⁻ = 0 with τ = 1
        let z = [1.0, 0.0];
        let l = nce_loss(&z, &[1.0, 0.0], &[&[0.0, 1.0]], 1.0).unwrap();
        assert!((l.loss + 0.379_885_493_041_722_5).abs() < 1e-12);
    }

    #[test]
    fn nce_loss_uniform_similarities() {
        let z = [1.0, 0.0];
        let v = [0.6, 0.8];
        let negs: Vec<&[f64]> = vec![&v; 4];
        let l = nce_loss(&z, &v, &negs, 0.5).unwrap();
        assert!(l.loss.abs() < 1e-12);
        // softmax weights 1/5 each: grad = (5·(1/5) − 1)·v/τ = 0
        assert!(l.grad.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn empty_negatives_rejected() {
        let mlp = Mlp::new(&[2, 3], &mut Rng::new(0)).unwrap();
        assert!(loss_and_grad(&mlp, &[1.0, 0.0], &[1.0, 0.0, 0.0], &[], 1.0).is_err());
    }

    #[test]
    fn set_ratio_identical_sets_is_zero() {
        let z = [0.0, 1.0];
        let a = [0.6, 0.8];
        let b = [1.0, 0.0];
        let set: Vec<&[f64]> = vec![&a, &b];
        let l = set_ratio_loss(&z, &set, &set, 0.1).unwrap();
        assert!(l.loss.abs() < 1e-12);
        assert!(l.grad.iter().all(|g| g.abs() < 1e-12));
    }
}
