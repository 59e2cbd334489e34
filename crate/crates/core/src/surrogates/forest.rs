//! Random forest regression: bootstrapped CART trees with random feature
//! subsets, averaged.

use super::{check_cols, check_training, Prediction, Surrogate};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct ForestControl {
    pub ntree: usize,
    /// Features tried per split; `None` means `max(1, floor(d / 3))`.
    pub mtry: Option<usize>,
    /// Nodes with at most this many samples become leaves.
    pub min_node_size: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestControl {
    fn default() -> Self {
        Self {
            ntree: 500,
            mtry: None,
            min_node_size: 5,
            bootstrap: true,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        dim: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    dim,
                    threshold,
                    left,
                    right,
                } => at = if x[dim] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForestFit {
    trees: Vec<Tree>,
    dim: usize,
    mtry: usize,
    tree_seeds: Vec<u64>,
}

impl ForestFit {
    pub fn ntree(&self) -> usize {
        self.trees.len()
    }

    pub fn mtry(&self) -> usize {
        self.mtry
    }

    pub fn tree_seeds(&self) -> &[u64] {
        &self.tree_seeds
    }
}

pub fn fit_forest(x: &DMatrix<f64>, y: &DVector<f64>, control: &ForestControl) -> Result<ForestFit> {
    check_training(x, y)?;
    if control.ntree < 1 {
        return Err(Error::InvalidControl("ntree must be at least 1".into()));
    }
    let (n, d) = x.shape();
    let mtry = control.mtry.unwrap_or((d / 3).max(1));
    if mtry < 1 || mtry > d {
        return Err(Error::InvalidControl(format!("mtry must be in 1..={d}")));
    }
    let mut master = ChaCha8Rng::seed_from_u64(control.seed);
    let tree_seeds: Vec<u64> = (0..control.ntree).map(|_| master.random()).collect();
    let cols: Vec<Vec<f64>> = (0..d).map(|c| x.column(c).iter().copied().collect()).collect();
    let ys: Vec<f64> = y.iter().copied().collect();
    let trees = tree_seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let idx: Vec<usize> = if control.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut b = Builder {
                cols: &cols,
                y: &ys,
                mtry,
                min_node_size: control.min_node_size,
                nodes: Vec::new(),
            };
            b.grow(idx, &mut rng);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(ForestFit {
        trees,
        dim: d,
        mtry,
        tree_seeds,
    })
}

struct Builder<'a> {
    cols: &'a [Vec<f64>],
    y: &'a [f64],
    mtry: usize,
    min_node_size: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn grow<R: Rng>(&mut self, idx: Vec<usize>, rng: &mut R) -> usize {
        let at = self.nodes.len();
        let mean = idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64;
        self.nodes.push(Node::Leaf(mean));
        if idx.len() <= self.min_node_size {
            return at;
        }
        let dims = rand::seq::index::sample(rng, self.cols.len(), self.mtry).into_vec();
        let Some(split) = best_split(self.cols, self.y, &idx, &dims) else {
            return at;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.cols[split.dim][i] <= split.threshold);
        let left = self.grow(l, rng);
        let right = self.grow(r, rng);
        self.nodes[at] = Node::Split {
            dim: split.dim,
            threshold: split.threshold,
            left,
            right,
        };
        at
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Split {
    pub dim: usize,
    pub threshold: f64,
    /// Reduction of the sum of squared errors.
    pub gain: f64,
}

/// Best variance-reducing split over `dims`, with thresholds at midpoints
/// between consecutive distinct values. Ties keep the first candidate found.
pub(crate) fn best_split(cols: &[Vec<f64>], y: &[f64], idx: &[usize], dims: &[usize]) -> Option<Split> {
    let n = idx.len() as f64;
    let total: f64 = idx.iter().map(|&i| y[i]).sum();
    let parent = total * total / n;
    let mut best: Option<Split> = None;
    let mut order = idx.to_vec();
    for &dim in dims {
        let col = &cols[dim];
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        let mut left_sum = 0.0;
        for k in 0..order.len() - 1 {
            left_sum += y[order[k]];
            let (a, b) = (col[order[k]], col[order[k + 1]]);
            if a == b {
                continue;
            }
            let nl = (k + 1) as f64;
            let nr = n - nl;
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / nl + right_sum * right_sum / nr - parent;
            if gain > 1e-12 * parent.abs().max(1e-300) && best.is_none_or(|s| gain > s.gain) {
                let mut threshold = 0.5 * (a + b);
                if threshold >= b {
                    threshold = a;
                }
                best = Some(Split { dim, threshold, gain });
            }
        }
    }
    best
}

impl Surrogate for ForestFit {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, x: &DMatrix<f64>) -> Result<Prediction> {
        check_cols(self.dim, x)?;
        let mean = DVector::from_fn(x.nrows(), |r, _| {
            let row: Vec<f64> = x.row(r).iter().copied().collect();
            self.trees.iter().map(|t| t.predict(&row)).sum::<f64>() / self.trees.len() as f64
        });
        Ok(Prediction { mean, sd: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exhaustive(xs: &[f64], ys: &[f64]) -> (f64, f64) {
        // try every midpoint between sorted distinct values, compute SSE directly
        let sse = |v: &[f64]| {
            if v.is_empty() {
                return 0.0;
            }
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|a| (a - m) * (a - m)).sum::<f64>()
        };
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let mut best = (f64::NAN, f64::INFINITY);
        for w in sorted.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let l: Vec<f64> = xs.iter().zip(ys).filter(|(x, _)| **x <= t).map(|(_, y)| *y).collect();
            let r: Vec<f64> = xs.iter().zip(ys).filter(|(x, _)| **x > t).map(|(_, y)| *y).collect();
            let s = sse(&l) + sse(&r);
            if s < best.1 {
                best = (t, s);
            }
        }
        best
    }

    #[test]
    fn first_split_matches_exhaustive_oracle() {
        let xs = vec![0.0, 1.0, 2.0, 3.0];
        let ys = vec![0.0, 0.0, 10.0, 10.0];
        let s = best_split(std::slice::from_ref(&xs), &ys, &[0, 1, 2, 3], &[0]).unwrap();
        let (t, sse) = exhaustive(&xs, &ys);
        assert_eq!(s.threshold, t);
        assert!(s.threshold > 1.0 && s.threshold < 2.0);
        let total_sse = 100.0;
        assert!((total_sse - s.gain - sse).abs() < 1e-9);
    }

    #[test]
    fn single_tree_without_bootstrap_splits_at_oracle() {
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let y = DVector::from_row_slice(&[0.0, 0.0, 10.0, 10.0]);
        let c = ForestControl {
            ntree: 1,
            min_node_size: 1,
            bootstrap: false,
            ..Default::default()
        };
        let fit = fit_forest(&x, &y, &c).unwrap();
        match fit.trees[0].nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(threshold, 1.5),
            ref n => panic!("root is {n:?}"),
        }
        let p = fit.predict_mean(&DMatrix::from_row_slice(2, 1, &[0.4, 2.6])).unwrap();
        assert_eq!(p.as_slice(), &[0.0, 10.0]);
    }

    #[test]
    fn constant_target() {
        let x = DMatrix::from_fn(12, 2, |r, c| (r * (c + 1)) as f64);
        let y = DVector::from_element(12, -3.0);
        let fit = fit_forest(&x, &y, &ForestControl::default()).unwrap();
        let p = fit.predict_mean(&DMatrix::from_row_slice(2, 2, &[0.0, 100.0, 5.5, 2.0])).unwrap();
        assert!(p.iter().all(|v| *v == -3.0));
    }

    #[test]
    fn single_row() {
        let x = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let y = DVector::from_row_slice(&[4.25]);
        let fit = fit_forest(&x, &y, &ForestControl::default()).unwrap();
        let p = fit.predict_mean(&DMatrix::from_row_slice(1, 3, &[9.0, 9.0, 9.0])).unwrap();
        assert_eq!(p[0], 4.25);
    }

    #[test]
    fn defaults_and_determinism() {
        let x = DMatrix::from_fn(30, 7, |r, c| ((r * 13 + c * 5) % 17) as f64);
        let y = DVector::from_fn(30, |r, _| (r as f64 * 0.37).cos());
        let c = ForestControl {
            ntree: 20,
            ..Default::default()
        };
        let a = fit_forest(&x, &y, &c).unwrap();
        let b = fit_forest(&x, &y, &c).unwrap();
        assert_eq!(a.mtry(), 2);
        assert_eq!(a.ntree(), 20);
        assert_eq!(a.trees, b.trees);
        assert_eq!(ForestControl::default().ntree, 500);
    }

    #[test]
    fn leaves_respect_min_node_size() {
        let x = DMatrix::from_fn(6, 1, |r, _| r as f64);
        let y = DVector::from_fn(6, |r, _| r as f64);
        let c = ForestControl {
            ntree: 1,
            min_node_size: 6,
            bootstrap: false,
            ..Default::default()
        };
        let fit = fit_forest(&x, &y, &c).unwrap();
        assert_eq!(fit.trees[0].nodes, vec![Node::Leaf(2.5)]);
    }

    #[test]
    fn rejects_bad_mtry() {
        let x = DMatrix::zeros(3, 2);
        let y = DVector::zeros(3);
        let c = ForestControl {
            mtry: Some(3),
            ..Default::default()
        };
        assert!(fit_forest(&x, &y, &c).is_err());
    }
}
