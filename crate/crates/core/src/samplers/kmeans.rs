use crate::error::{Error, Result};
use crate::numerics::{squared_distance, Matrix, Rng};

/// Result of Lloyd's algorithm. Every label indexes the nearest centroid.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterAssignment {
    pub centroids: Matrix,
    pub labels: Vec<usize>,
    /// Within-cluster sum of squares after each assignment step.
    pub objective_trace: Vec<f64>,
}

impl ClusterAssignment {
    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.labels.iter().enumerate().filter(move |(_, &l)| l == cluster).map(|(i, _)| i)
    }
}

/// Nearest centroid per row; ties go to the lower centroid index.
pub fn assign(points: &Matrix, centroids: &Matrix) -> Vec<usize> {
    points
        .iter_rows()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (c, centroid) in centroids.iter_rows().enumerate() {
                let d = squared_distance(p, centroid);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best.0
        })
        .collect()
}

pub fn within_cluster_ss(points: &Matrix, centroids: &Matrix, labels: &[usize]) -> f64 {
    points.iter_rows().zip(labels).map(|(p, &l)| squared_distance(p, centroids.row(l))).sum()
}

/// Cluster means for fixed `labels`. An empty cluster is moved onto the point
/// farthest from its own centroid (each point used at most once).
pub fn update_centroids(points: &Matrix, labels: &[usize], k: usize) -> Matrix {
    let d = points.cols();
    let mut sums = Matrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter_rows().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums.row_mut(l).iter_mut().zip(p) {
            *s += x;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            for s in sums.row_mut(c) {
                *s /= count as f64;
            }
        }
    }
    let mut taken = vec![false; points.rows()];
    for c in (0..k).filter(|&c| counts[c] == 0) {
        let far = (0..points.rows())
            .filter(|&i| !taken[i])
            .map(|i| (i, squared_distance(points.row(i), sums.row(labels[i]))))
            .fold(None, |best: Option<(usize, f64)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            });
        if let Some((i, _)) = far {
            taken[i] = true;
            sums.row_mut(c).copy_from_slice(points.row(i));
        }
    }
    sums
}

/// One Lloyd iteration from `centroids`: assign, then recompute means.
pub fn lloyd_step(points: &Matrix, centroids: &Matrix) -> (Vec<usize>, Matrix) {
    let labels = assign(points, centroids);
    let updated = update_centroids(points, &labels, centroids.rows());
    (labels, updated)
}

fn plus_plus_seeds(points: &Matrix, k: usize, rng: &mut Rng) -> Matrix {
    let n = points.rows();
    let mut chosen = vec![rng.below(n)];
    let mut dist: Vec<f64> = points.iter_rows().map(|p| squared_distance(p, points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in dist.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.below(n)
        };
        chosen.push(next);
        for (i, p) in points.iter_rows().enumerate() {
            dist[i] = dist[i].min(squared_distance(p, points.row(next)));
        }
    }
    let rows: Vec<Vec<f64>> = chosen.iter().map(|&i| points.row(i).to_vec()).collect();
    Matrix::from_rows(&rows).expect("rows share a width")
}

/// Lloyd's algorithm with k-means++ seeding. Stops after `max_iters` updates
/// or once assignments no longer change.
pub fn kmeans(points: &Matrix, k: usize, max_iters: usize, rng: &mut Rng) -> Result<ClusterAssignment> {
    let n = points.rows();
    if k == 0 {
        return Err(Error::InvalidParameter("k-means needs K >= 1".into()));
    }
    if k > n {
        return Err(Error::InvalidParameter(format!("K = {k} exceeds the {n} candidates")));
    }
    let mut centroids = plus_plus_seeds(points, k, rng);
    let mut labels = assign(points, &centroids);
    let mut objective_trace = vec![within_cluster_ss(points, &centroids, &labels)];
    for _ in 0..max_iters {
        centroids = update_centroids(points, &labels, k);
        let next = assign(points, &centroids);
        objective_trace.push(within_cluster_ss(points, &centroids, &next));
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(ClusterAssignment { centroids, labels, objective_trace })
}

/// Every other member of the anchor's cluster; a singleton cluster is an error.
pub fn cave_select(anchor_index: usize, assignment: &ClusterAssignment) -> Result<Vec<usize>> {
    let support = close_neighbor_set(anchor_index, assignment)?;
    if support.is_empty() {
        return Err(Error::NoNegatives(format!("instance {anchor_index} is alone in its cluster")));
    }
    Ok(support)
}

/// Members of the anchor's cluster other than the anchor; may be empty.
pub fn close_neighbor_set(anchor_index: usize, assignment: &ClusterAssignment) -> Result<Vec<usize>> {
    let label = *assignment
        .labels
        .get(anchor_index)
        .ok_or(Error::IndexOutOfRange { index: anchor_index, len: assignment.labels.len() })?;
    Ok(assignment.members(label).filter(|&i| i != anchor_index).collect())
}
