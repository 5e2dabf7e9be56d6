use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

/// Gaussian clusters around class means on a sphere of radius `class_scale`.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub points: Matrix,
    /// Used only for evaluation.
    pub labels: Vec<usize>,
    pub class_means: Matrix,
    pub class_scale: f64,
    pub noise_scale: f64,
}

/// Labelled points of one split.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub points: Matrix,
    pub labels: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn make_synthetic(
    classes: usize,
    per_class: usize,
    dim: usize,
    class_scale: f64,
    noise_scale: f64,
    rng: &mut Rng,
) -> Result<SyntheticDataset> {
    if classes < 2 || per_class == 0 || dim == 0 {
        return Err(Error::InvalidParameter(format!(
            "need classes >= 2 and positive per_class, dim; got {classes}, {per_class}, {dim}"
        )));
    }
    if !(class_scale >= 0.0 && noise_scale >= 0.0 && class_scale.is_finite() && noise_scale.is_finite()) {
        return Err(Error::InvalidParameter("scales must be finite and non-negative".into()));
    }
    let means: Vec<Vec<f64>> =
        (0..classes).map(|_| rng.unit_vector(dim).into_iter().map(|v| v * class_scale).collect()).collect();
    let mut rows = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            rows.push(mean.iter().map(|m| m + noise_scale * rng.normal()).collect::<Vec<f64>>());
            labels.push(c);
        }
    }
    Ok(SyntheticDataset {
        points: Matrix::from_rows(&rows)?,
        labels,
        class_means: Matrix::from_rows(&means)?,
        class_scale,
        noise_scale,
    })
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The same points with every label set to 0.
    pub fn without_labels(&self) -> Self {
        Self { labels: vec![0; self.labels.len()], ..self.clone() }
    }

    /// Seeded shuffle, then the first `⌊0.8·n⌋` points train and the rest test.
    pub fn split(&self, rng: &mut Rng) -> Result<(Split, Split)> {
        let n = self.len();
        let n_train = (n * 4) / 5;
        if n_train == 0 || n_train == n {
            return Err(Error::InvalidParameter(format!("{n} points are too few to split 80/20")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let take = |idx: &[usize]| -> Result<Split> {
            let rows: Vec<Vec<f64>> = idx.iter().map(|&i| self.points.row(i).to_vec()).collect();
            Ok(Split { points: Matrix::from_rows(&rows)?, labels: idx.iter().map(|&i| self.labels[i]).collect() })
        };
        Ok((take(&order[..n_train])?, take(&order[n_train..])?))
    }
}

/// Random view `v_j = mask_j · s_j · (x_j + σ ε_j)` with `ε_j ~ N(0, 1)`,
/// `s_j ~ U[lo, hi]` and `mask_j ~ Bernoulli(1 − dropout_prob)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AugmentationSpec {
    pub additive_noise_sigma: f64,
    pub scale_jitter_range: (f64, f64),
    pub dropout_prob: f64,
}

impl AugmentationSpec {
    pub fn identity() -> Self {
        Self { additive_noise_sigma: 0.0, scale_jitter_range: (1.0, 1.0), dropout_prob: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_jitter_range;
        if !(self.additive_noise_sigma >= 0.0 && self.additive_noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("noise sigma {}", self.additive_noise_sigma)));
        }
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidParameter(format!("scale jitter range ({lo}, {hi})")));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(Error::InvalidParameter(format!("dropout probability {}", self.dropout_prob)));
        }
        Ok(())
    }
}

pub fn augment(point: &[f64], spec: &AugmentationSpec, rng: &mut Rng) -> Vec<f64> {
    let (lo, hi) = spec.scale_jitter_range;
    point
        .iter()
        .map(|&x| {
            let noisy = x + spec.additive_noise_sigma * rng.normal();
            let scale = if lo == hi { lo } else { rng.uniform_range(lo, hi) };
            let keep = !rng.bernoulli(spec.dropout_prob);
            if keep { scale * noisy } else { 0.0 }
        })
        .collect()
}

/// 1-NN accuracy: each test row takes the label of its nearest train row by
/// L2 distance, ties going to the lowest train index.
pub fn knn_accuracy(train: &Matrix, train_labels: &[usize], test: &Matrix, test_labels: &[usize]) -> Result<f64> {
    if train.rows() == 0 || test.rows() == 0 {
        return Err(Error::Empty("1-NN split"));
    }
    if train.rows() != train_labels.len() || test.rows() != test_labels.len() {
        return Err(Error::DimensionMismatch { expected: train.rows(), got: train_labels.len() });
    }
    if train.cols() != test.cols() {
        return Err(Error::DimensionMismatch { expected: train.cols(), got: test.cols() });
    }
    let correct = test
        .iter_rows()
        .zip(test_labels)
        .filter(|(row, label)| {
            let mut best = (f64::INFINITY, 0);
            for (j, t) in train.iter_rows().enumerate() {
                let d = crate::numerics::squared_distance(row, t);
                if d < best.0 {
                    best = (d, j);
                }
            }
            train_labels[best.1] == **label
        })
        .count();
    Ok(correct as f64 / test.rows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::l2_norm;

    #[test]
    fn zero_noise_collapses_classes() {
        let d = make_synthetic(3, 5, 4, 2.0, 0.0, &mut Rng::new(1)).unwrap();
        for i in 0..d.len() {
            assert_eq!(d.points.row(i), d.class_means.row(d.labels[i]));
        }
        for c in 0..3 {
            assert!((l2_norm(d.class_means.row(c)) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn separated_classes_give_perfect_raw_knn() {
        let d = make_synthetic(2, 50, 8, 10.0, 0.1, &mut Rng::new(2)).unwrap();
        let (tr, te) = d.split(&mut Rng::new(3)).unwrap();
        assert_eq!((tr.len(), te.len()), (80, 20));
        assert_eq!(knn_accuracy(&tr.points, &tr.labels, &te.points, &te.labels).unwrap(), 1.0);
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = make_synthetic(4, 10, 3, 1.0, 0.5, &mut Rng::new(9)).unwrap();
        let b = make_synthetic(4, 10, 3, 1.0, 0.5, &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
        assert!(make_synthetic(1, 10, 3, 1.0, 0.5, &mut Rng::new(9)).is_err());
    }

    #[test]
    fn identity_and_full_dropout() {
        let x = [0.5, -1.0, 2.0];
        assert_eq!(augment(&x, &AugmentationSpec::identity(), &mut Rng::new(0)), x.to_vec());
        let drop = AugmentationSpec { dropout_prob: 1.0, ..AugmentationSpec::identity() };
        assert_eq!(augment(&x, &drop, &mut Rng::new(0)), vec![0.0; 3]);
    }

    #[test]
    fn augmentation_statistics() {
        let spec = AugmentationSpec { additive_noise_sigma: 0.5, scale_jitter_range: (0.8, 1.2), dropout_prob: 0.2 };
        let x = [1.0];
        let n = 10_000;
        let mut rng = Rng::new(4);
        let views: Vec<f64> = (0..n).map(|_| augment(&x, &spec, &mut rng)[0]).collect();
        let nf = n as f64;
        let zeros = views.iter().filter(|v| **v == 0.0).count() as f64 / nf;
        assert!((zeros - 0.2).abs() < 3.0 * (0.2f64 * 0.8 / nf).sqrt(), "{zeros}");
        // kept coordinates: E[s(x+σε)] = 1, Var = E[s²]E[(x+σε)²] − 1 = (1 + 0.4²/12)(1.25) − 1
        let kept: Vec<f64> = views.iter().copied().filter(|v| *v != 0.0).collect();
        let m = crate::numerics::mean(&kept);
        let var = crate::numerics::sample_variance(&kept);
        let expect_var = (1.0 + 0.16 / 12.0) * 1.25 - 1.0;
        assert!((m - 1.0).abs() < 3.0 * (expect_var / kept.len() as f64).sqrt(), "{m}");
        let m4 = kept.iter().map(|v| (v - m).powi(4)).sum::<f64>() / kept.len() as f64;
        let se_var = ((m4 - var * var) / kept.len() as f64).sqrt();
        assert!((var - expect_var).abs() < 3.0 * se_var, "{var} vs {expect_var}");
    }

    #[test]
    fn independent_views_differ() {
        let spec = AugmentationSpec { additive_noise_sigma: 0.1, ..AugmentationSpec::identity() };
        let mut rng = Rng::new(5);
        assert_ne!(augment(&[1.0, 2.0], &spec, &mut rng), augment(&[1.0, 2.0], &spec, &mut rng));
    }

    #[test]
    fn knn_hand_layout() {
        // train (0,0)→0, (4,0)→1, (0,4)→1. Test (1,0) and (3,1) are right,
        // (1,3) lands on (0,4) and is wrong, (2,0) ties and takes index 0.
        let train = Matrix::from_rows(&[vec![0.0, 0.0], vec![4.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let test = Matrix::from_rows(&[vec![1.0, 0.0], vec![3.0, 1.0], vec![1.0, 3.0], vec![2.0, 0.0]]).unwrap();
        let acc = knn_accuracy(&train, &[0, 1, 1], &test, &[0, 1, 0, 0]).unwrap();
        assert_eq!(acc, 0.75);
    }

    #[test]
    fn knn_exact_match_wins() {
        let train = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0 + 1e-9]]).unwrap();
        let test = Matrix::from_rows(&[vec![1.0, 1.0 + 1e-9]]).unwrap();
        assert_eq!(knn_accuracy(&train, &[3, 7], &test, &[7]).unwrap(), 1.0);
    }
}
