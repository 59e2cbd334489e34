use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Every evaluation of a run, in evaluation order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalArchive {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    seeds: Vec<Option<u64>>,
    replicate: Vec<usize>,
}

impl EvalArchive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an archive from stored rows. Replicate indices are recomputed
    /// from repeated x values.
    pub fn from_parts(x: &DMatrix<f64>, y: &DVector<f64>, seeds: Option<Vec<Option<u64>>>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
        }
        let seeds = seeds.unwrap_or_else(|| vec![None; y.len()]);
        if seeds.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: y.len(), got: seeds.len() });
        }
        let mut a = Self::new();
        for r in 0..x.nrows() {
            a.push(x.row(r).iter().copied().collect(), y[r], seeds[r]);
        }
        Ok(a)
    }

    /// Appends a row. Non-finite values are stored as +inf.
    pub fn push(&mut self, x: Vec<f64>, y: f64, seed: Option<u64>) {
        let rep = 1 + self.x.iter().filter(|p| **p == x).count();
        self.x.push(x);
        self.y.push(if y.is_finite() { y } else { f64::INFINITY });
        self.seeds.push(seed);
        self.replicate.push(rep);
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.x.first().map(Vec::len)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn seeds(&self) -> &[Option<u64>] {
        &self.seeds
    }

    /// 1-based ordinal of each row among rows with the same x.
    pub fn replicates(&self) -> &[usize] {
        &self.replicate
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.x.iter().any(|p| p.as_slice() == x)
    }

    pub fn x_matrix(&self) -> DMatrix<f64> {
        let d = self.dim().unwrap_or(0);
        DMatrix::from_fn(self.len(), d, |r, c| self.x[r][c])
    }

    pub fn y_vector(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.y)
    }

    /// Rows with finite y, for model fitting.
    pub fn finite_rows(&self) -> (DMatrix<f64>, DVector<f64>) {
        let keep: Vec<usize> = (0..self.len()).filter(|&r| self.y[r].is_finite()).collect();
        let d = self.dim().unwrap_or(0);
        (
            DMatrix::from_fn(keep.len(), d, |r, c| self.x[keep[r]][c]),
            DVector::from_iterator(keep.len(), keep.iter().map(|&r| self.y[r])),
        )
    }

    /// Index of the smallest y; ties go to the earliest row.
    pub fn best_index(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &v) in self.y.iter().enumerate() {
            if best.is_none_or(|b| v < self.y[b]) {
                best = Some(i);
            }
        }
        best
    }

    /// Running minimum of y.
    pub fn best_trace(&self) -> Vec<f64> {
        let mut m = f64::INFINITY;
        self.y
            .iter()
            .map(|&v| {
                m = m.min(v);
                m
            })
            .collect()
    }

    pub fn last_seed(&self) -> Option<u64> {
        self.seeds.iter().rev().find_map(|s| *s)
    }

    /// Distinct x values in order of first appearance with their row indices.
    pub fn groups(&self) -> Vec<(Vec<f64>, Vec<usize>)> {
        let mut out: Vec<(Vec<f64>, Vec<usize>)> = Vec::new();
        for (r, p) in self.x.iter().enumerate() {
            match out.iter_mut().find(|(q, _)| q == p) {
                Some((_, rows)) => rows.push(r),
                None => out.push((p.clone(), vec![r])),
            }
        }
        out
    }
}

/// Seed counter for noisy evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseState {
    next: Option<u64>,
}

impl NoiseState {
    pub fn new(seed_fun: Option<u64>) -> Self {
        Self { next: seed_fun }
    }

    /// Returns the current seed and advances the counter by one.
    pub fn next_seed(&mut self) -> Result<u64> {
        let s = self.next.ok_or(Error::NoSeed)?;
        self.next = Some(s.wrapping_add(1));
        Ok(s)
    }

    pub fn peek(&self) -> Option<u64> {
        self.next
    }
}
