use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::numerics::{l2_norm, Matrix, Rng};

const UNIT_TOL: f64 = 1e-6;

fn check_unit(v: &[f64]) -> Result<()> {
    let n = l2_norm(v);
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidParameter(format!("stored embeddings must be unit norm, got {n}")));
    }
    Ok(())
}

/// One cached embedding per dataset instance; row `i` belongs to instance `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryBank {
    entries: Matrix,
}

impl MemoryBank {
    /// Random unit rows.
    pub fn random(n: usize, dim: usize, rng: &mut Rng) -> Self {
        let rows: Vec<Vec<f64>> = (0..n).map(|_| rng.unit_vector(dim)).collect();
        Self { entries: Matrix::from_rows(&rows).expect("rows share a width") }
    }

    pub fn from_matrix(entries: Matrix) -> Result<Self> {
        for row in entries.iter_rows() {
            check_unit(row)?;
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.entries.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.entries.row(i)
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    /// Replaces row `index` (no blending with the previous value).
    pub fn update(&mut self, index: usize, embedding: &[f64]) -> Result<()> {
        if index >= self.len() {
            return Err(Error::IndexOutOfRange { index, len: self.len() });
        }
        if embedding.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: embedding.len() });
        }
        check_unit(embedding)?;
        self.entries.row_mut(index).copy_from_slice(embedding);
        Ok(())
    }
}

/// Fixed-capacity first-in first-out store of embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct FifoQueue {
    capacity: usize,
    dim: usize,
    entries: VecDeque<Vec<f64>>,
}

impl FifoQueue {
    pub fn new(capacity: usize, dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter("queue capacity must be positive".into()));
        }
        Ok(Self { capacity, dim, entries: VecDeque::with_capacity(capacity) })
    }

    /// Queue filled to capacity with random unit vectors.
    pub fn random_filled(capacity: usize, dim: usize, rng: &mut Rng) -> Result<Self> {
        let mut q = Self::new(capacity, dim)?;
        for _ in 0..capacity {
            q.entries.push_back(rng.unit_vector(dim));
        }
        Ok(q)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    /// Appends `embedding`, returning the evicted oldest entry when full.
    pub fn enqueue(&mut self, embedding: &[f64]) -> Result<Option<Vec<f64>>> {
        if embedding.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: embedding.len() });
        }
        check_unit(embedding)?;
        let evicted = if self.is_full() { self.entries.pop_front() } else { None };
        self.entries.push_back(embedding.to_vec());
        Ok(evicted)
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.iter().map(Vec::as_slice)
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.entries[i]
    }

    /// Snapshot as a matrix, oldest entry in row 0.
    pub fn to_matrix(&self) -> Matrix {
        let rows: Vec<Vec<f64>> = self.entries.iter().cloned().collect();
        if rows.is_empty() {
            return Matrix::zeros(0, self.dim);
        }
        Matrix::from_rows(&rows).expect("rows share a width")
    }
}
