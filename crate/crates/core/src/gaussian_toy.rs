//! Correlated bivariate Gaussian benchmark with closed-form mutual information.
//!
//! `(X, Y) = Z + ε` with `Z ~ N(0, Σ_Z)` and `ε ~ N(0, Σ_ε)`, so the pair is
//! jointly Gaussian with covariance `Σ = Σ_Z + Σ_ε`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::numerics::{cholesky2x2, gauss_sample, Matrix, Rng};

/// Covariances of the latent and noise components.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPairSpec {
    pub sigma_z: Matrix,
    pub sigma_eps: Matrix,
}

impl GaussianPairSpec {
    pub fn new(sigma_z: Matrix, sigma_eps: Matrix) -> Result<Self> {
        cholesky2x2(&sigma_z)?;
        cholesky2x2(&sigma_eps)?;
        let spec = Self { sigma_z, sigma_eps };
        cholesky2x2(&spec.joint_covariance())?;
        Ok(spec)
    }

    /// `Σ_Z = [[1, -0.5], [-0.5, 1]]`, `Σ_ε = [[1, 0.9], [0.9, 1]]`.
    pub fn benchmark() -> Self {
        Self {
            sigma_z: Matrix::from_vec(2, 2, vec![1.0, -0.5, -0.5, 1.0]).expect("2x2"),
            sigma_eps: Matrix::from_vec(2, 2, vec![1.0, 0.9, 0.9, 1.0]).expect("2x2"),
        }
    }

    pub fn joint_covariance(&self) -> Matrix {
        let data = self
            .sigma_z
            .as_slice()
            .iter()
            .zip(self.sigma_eps.as_slice())
            .map(|(a, b)| a + b)
            .collect();
        Matrix::from_vec(2, 2, data).expect("2x2")
    }

    pub fn mutual_information(&self) -> Result<f64> {
        analytic_mi(&self.joint_covariance())
    }
}

/// Paired scalar samples; `xs[i]` and `ys[i]` are one joint draw.
#[derive(Clone, Debug, PartialEq)]
pub struct PairDataset {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl PairDataset {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch { expected: xs.len(), got: ys.len() });
        }
        if xs.len() < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 pairs, got {}", xs.len())));
        }
        Ok(Self { xs, ys })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Sample covariance matrix `[[var x, cov], [cov, var y]]` (divisor n − 1).
    pub fn empirical_covariance(&self) -> Matrix {
        let n = self.len() as f64;
        let mx = self.xs.iter().sum::<f64>() / n;
        let my = self.ys.iter().sum::<f64>() / n;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for (x, y) in self.xs.iter().zip(&self.ys) {
            sxx += (x - mx) * (x - mx);
            sxy += (x - mx) * (y - my);
            syy += (y - my) * (y - my);
        }
        let d = n - 1.0;
        Matrix::from_vec(2, 2, vec![sxx / d, sxy / d, sxy / d, syy / d]).expect("2x2")
    }

    /// Writes `x,y` rows with round-trip float formatting.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,y")?;
        for (x, y) in self.xs.iter().zip(&self.ys) {
            writeln!(out, "{x:.16e},{y:.16e}")?;
        }
        Ok(())
    }
}

/// Mutual information (nats) of a bivariate Gaussian with covariance `sigma`:
/// `-½ ln(1 − Σ₁₂Σ₂₁ / (Σ₁₁Σ₂₂))`.
pub fn analytic_mi(sigma: &Matrix) -> Result<f64> {
    cholesky2x2(sigma)?;
    let rho2 = sigma.get(0, 1) * sigma.get(1, 0) / (sigma.get(0, 0) * sigma.get(1, 1));
    // ln_1p keeps precision for weakly dependent pairs
    Ok(-0.5 * (-rho2).ln_1p())
}

/// `n` i.i.d. joint draws of `(X, Y) = Z + ε`.
pub fn sample_pairs(spec: &GaussianPairSpec, n: usize, rng: &mut Rng) -> Result<PairDataset> {
    let lz = cholesky2x2(&spec.sigma_z)?;
    let le = cholesky2x2(&spec.sigma_eps)?;
    let origin = [0.0, 0.0];
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let z = gauss_sample(rng, &origin, &lz)?;
        let e = gauss_sample(rng, &origin, &le)?;
        xs.push(z[0] + e[0]);
        ys.push(z[1] + e[1]);
    }
    PairDataset::new(xs, ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(a: f64, b: f64, c: f64, d: f64) -> Matrix {
        Matrix::from_vec(2, 2, vec![a, b, c, d]).unwrap()
    }

    #[test]
    fn benchmark_mi_matches_reported_value() {
        let mi = GaussianPairSpec::benchmark().mutual_information().unwrap();
        assert!((mi - 0.02041).abs() < 1e-5);
        // 30-digit reference: -½ ln(0.96)
        assert!((mi - 0.020_410_997_260_127_565).abs() < 1e-15);
    }

    #[test]
    fn mi_examples() {
        assert_eq!(analytic_mi(&m(1.0, 0.0, 0.0, 1.0)).unwrap(), 0.0);
        assert!((analytic_mi(&m(1.0, 0.5, 0.5, 1.0)).unwrap() - 0.143_841_036_225_890_46).abs() < 1e-12);
        assert!(analytic_mi(&m(1.0, 1.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn mi_invariant_to_rescaling() {
        let s = m(2.0, 0.4, 0.4, 2.0);
        let base = analytic_mi(&s).unwrap();
        for (a, b) in [(0.1, 3.0), (7.0, 0.5), (1e-3, 1e3)] {
            let scaled = m(a * a * 2.0, a * b * 0.4, a * b * 0.4, b * b * 2.0);
            assert!((analytic_mi(&scaled).unwrap() - base).abs() < 1e-12);
        }
    }

    #[test]
    fn mi_increases_with_correlation() {
        let mut prev = -1.0;
        for i in 0..20 {
            let c = i as f64 * 0.09;
            let v = analytic_mi(&m(2.0, -c, -c, 2.0)).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn sample_covariance_near_truth_over_seeds() {
        let spec = GaussianPairSpec::benchmark();
        // sd of one 2000-point covariance estimate: sqrt((4 + 0.16) / 2000) ≈ 0.046
        let covs: Vec<f64> = (0..20)
            .map(|seed| sample_pairs(&spec, 2000, &mut Rng::new(seed)).unwrap().empirical_covariance().get(0, 1))
            .collect();
        for (seed, c) in covs.iter().enumerate() {
            assert!((c - 0.4).abs() < 4.0 * 0.046, "seed {seed}: {c}");
        }
        let avg = covs.iter().sum::<f64>() / covs.len() as f64;
        assert!((avg - 0.4).abs() < 0.1, "{avg}");
    }

    #[test]
    fn plug_in_mi_converges() {
        let spec = GaussianPairSpec::benchmark();
        let data = sample_pairs(&spec, 100_000, &mut Rng::new(5)).unwrap();
        let plug_in = analytic_mi(&data.empirical_covariance()).unwrap();
        assert!((plug_in - spec.mutual_information().unwrap()).abs() < 0.005);
    }

    #[test]
    fn vanishing_variance_concentrates_at_origin() {
        let tiny = m(1e-12, 0.0, 0.0, 1e-12);
        let spec = GaussianPairSpec::new(tiny.clone(), tiny).unwrap();
        let data = sample_pairs(&spec, 100, &mut Rng::new(1)).unwrap();
        assert!(data.xs.iter().chain(&data.ys).all(|v| v.abs() < 1e-4));
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = GaussianPairSpec::benchmark();
        let a = sample_pairs(&spec, 50, &mut Rng::new(3)).unwrap();
        let b = sample_pairs(&spec, 50, &mut Rng::new(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_export() {
        let data = PairDataset::new(vec![1.0, -0.5], vec![0.25, 2.0]).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,y"));
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(row, vec![1.0, 0.25]);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(GaussianPairSpec::new(m(1.0, 2.0, 2.0, 1.0), m(1.0, 0.0, 0.0, 1.0)).is_err());
        assert!(PairDataset::new(vec![1.0], vec![1.0]).is_err());
    }
}
