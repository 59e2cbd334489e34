//! Space-filling initial designs: Latin hypercube and uniform random sampling
//! over mixed numeric/integer/factor spaces.

use crate::error::{Error, Result};
use crate::space::ParamSpace;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Controls for design generation.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignControl {
    /// Number of points before replication.
    pub size: usize,
    /// Number of candidate Latin hypercubes; the maximin winner is kept.
    pub retries: usize,
    /// Copies of each row in the returned matrix.
    pub replicates: usize,
    pub seed: u64,
}

impl Default for DesignControl {
    fn default() -> Self {
        Self {
            size: 10,
            retries: 100,
            replicates: 1,
            seed: 1,
        }
    }
}

impl DesignControl {
    fn validate(&self) -> Result<()> {
        if self.size < 1 {
            return Err(Error::InvalidControl("design size must be at least 1".into()));
        }
        if self.retries < 1 {
            return Err(Error::InvalidControl("design retries must be at least 1".into()));
        }
        if self.replicates < 1 {
            return Err(Error::InvalidControl("design replicates must be at least 1".into()));
        }
        Ok(())
    }
}

/// Design strategy selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DesignKind {
    #[default]
    Lhd,
    UniformRandom,
}

impl DesignKind {
    pub fn generate<R: Rng + ?Sized>(
        self,
        existing: Option<&DMatrix<f64>>,
        space: &ParamSpace,
        control: &DesignControl,
        rng: &mut R,
    ) -> Result<DMatrix<f64>> {
        match self {
            DesignKind::Lhd => lhd_with_rng(existing, space, control, rng).map(|o| o.design),
            DesignKind::UniformRandom => uniform_with_rng(existing, space, control, rng),
        }
    }
}

/// Result of a Latin hypercube search, kept for inspection.
#[derive(Debug, Clone)]
pub struct LhdOutcome {
    /// Snapped and replicated design.
    pub design: DMatrix<f64>,
    /// Winning candidate before snapping and replication.
    pub raw: DMatrix<f64>,
    /// Maximin score of every candidate, in generation order.
    pub candidate_scores: Vec<f64>,
    pub best_index: usize,
}

/// Latin hypercube design seeded from `control.seed`.
///
/// When `existing` is given only the new points are returned; the maximin
/// criterion then also accounts for distances to the existing rows.
pub fn make_lhd(
    existing: Option<&DMatrix<f64>>,
    space: &ParamSpace,
    control: &DesignControl,
) -> Result<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(control.seed);
    lhd_with_rng(existing, space, control, &mut rng).map(|o| o.design)
}

/// Uniform random design seeded from `control.seed`.
pub fn make_uniform(
    existing: Option<&DMatrix<f64>>,
    space: &ParamSpace,
    control: &DesignControl,
) -> Result<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(control.seed);
    uniform_with_rng(existing, space, control, &mut rng)
}

pub fn lhd_with_rng<R: Rng + ?Sized>(
    existing: Option<&DMatrix<f64>>,
    space: &ParamSpace,
    control: &DesignControl,
    rng: &mut R,
) -> Result<LhdOutcome> {
    control.validate()?;
    check_existing(existing, space)?;
    let n = control.size;
    let d = space.dim();
    let intervals: Vec<(f64, f64)> = (0..d).map(|i| space.sampling_interval(i)).collect();
    let existing_unit = existing.map(|x| to_unit(x, &intervals));

    let mut best: Option<(f64, DMatrix<f64>)> = None;
    let mut scores = Vec::with_capacity(control.retries);
    let mut best_index = 0;
    let mut perm: Vec<usize> = (0..n).collect();
    for attempt in 0..control.retries {
        // unit-cube stratified sample
        let mut unit = DMatrix::zeros(n, d);
        for c in 0..d {
            perm.shuffle(rng);
            for r in 0..n {
                let u: f64 = rng.random();
                unit[(r, c)] = (perm[r] as f64 + u) / n as f64;
            }
        }
        let score = maximin_score(&unit, existing_unit.as_ref(), &intervals);
        scores.push(score);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best_index = attempt;
            best = Some((score, unit));
        }
    }
    let (_, unit) = best.expect("retries >= 1");
    let raw = from_unit(&unit, &intervals);
    let design = finish(raw.clone(), space, control.replicates);
    Ok(LhdOutcome {
        design,
        raw,
        candidate_scores: scores,
        best_index,
    })
}

pub fn uniform_with_rng<R: Rng + ?Sized>(
    existing: Option<&DMatrix<f64>>,
    space: &ParamSpace,
    control: &DesignControl,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    control.validate()?;
    check_existing(existing, space)?;
    let d = space.dim();
    let intervals: Vec<(f64, f64)> = (0..d).map(|i| space.sampling_interval(i)).collect();
    let mut raw = DMatrix::zeros(control.size, d);
    for r in 0..control.size {
        for (c, &(lo, hi)) in intervals.iter().enumerate() {
            let u: f64 = rng.random();
            raw[(r, c)] = lo + u * (hi - lo);
        }
    }
    Ok(finish(raw, space, control.replicates))
}

/// Repeats each row `times` times, consecutively.
pub fn replicate_rows(x: &DMatrix<f64>, times: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows() * times, x.ncols());
    for r in 0..x.nrows() {
        for k in 0..times {
            out.row_mut(r * times + k).copy_from(&x.row(r));
        }
    }
    out
}

fn finish(mut raw: DMatrix<f64>, space: &ParamSpace, replicates: usize) -> DMatrix<f64> {
    space.snap_rows(&mut raw);
    if replicates > 1 {
        replicate_rows(&raw, replicates)
    } else {
        raw
    }
}

fn check_existing(existing: Option<&DMatrix<f64>>, space: &ParamSpace) -> Result<()> {
    match existing {
        Some(x) if x.ncols() != space.dim() => Err(Error::DimensionMismatch {
            expected: space.dim(),
            got: x.ncols(),
        }),
        _ => Ok(()),
    }
}

fn to_unit(x: &DMatrix<f64>, intervals: &[(f64, f64)]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| {
        let (lo, hi) = intervals[c];
        if hi > lo {
            (x[(r, c)] - lo) / (hi - lo)
        } else {
            0.0
        }
    })
}

fn from_unit(unit: &DMatrix<f64>, intervals: &[(f64, f64)]) -> DMatrix<f64> {
    DMatrix::from_fn(unit.nrows(), unit.ncols(), |r, c| {
        let (lo, hi) = intervals[c];
        lo + unit[(r, c)] * (hi - lo)
    })
}

/// Smallest pairwise Euclidean distance on normalized coordinates, including
/// distances to `existing` rows. Degenerate dimensions contribute nothing.
fn maximin_score(unit: &DMatrix<f64>, existing: Option<&DMatrix<f64>>, intervals: &[(f64, f64)]) -> f64 {
    let active: Vec<usize> = (0..intervals.len())
        .filter(|&c| intervals[c].1 > intervals[c].0)
        .collect();
    let dist2 = |a: nalgebra::RowDVector<f64>, b: nalgebra::RowDVector<f64>| -> f64 {
        active.iter().map(|&c| (a[c] - b[c]).powi(2)).sum()
    };
    let mut best = f64::INFINITY;
    for i in 0..unit.nrows() {
        for j in (i + 1)..unit.nrows() {
            best = best.min(dist2(unit.row(i).into_owned(), unit.row(j).into_owned()));
        }
        if let Some(ex) = existing {
            for j in 0..ex.nrows() {
                best = best.min(dist2(unit.row(i).into_owned(), ex.row(j).into_owned()));
            }
        }
    }
    best.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::VarType;

    /// Bin index of every coordinate of a column, for `n` equal-width bins.
    fn bins(col: &[f64], lo: f64, hi: f64, n: usize) -> Vec<usize> {
        col.iter()
            .map(|&v| (((v - lo) / (hi - lo)) * n as f64).floor().min(n as f64 - 1.0) as usize)
            .collect()
    }

    #[test]
    fn one_dimensional_lhd_has_one_point_per_bin() {
        let space = ParamSpace::numeric(vec![-1.0], vec![1.0]).unwrap();
        let x = make_lhd(None, &space, &DesignControl::default()).unwrap();
        assert_eq!(x.nrows(), 10);
        let col: Vec<f64> = x.column(0).iter().copied().collect();
        let mut b = bins(&col, -1.0, 1.0, 10);
        b.sort();
        assert_eq!(b, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn mixed_types_are_snapped() {
        let space = ParamSpace::new(
            vec![-1.0, -2.0, 1.0, 0.0],
            vec![1.0, 4.0, 9.0, 1.0],
            vec![VarType::Numeric, VarType::Integer, VarType::Factor, VarType::Factor],
        )
        .unwrap();
        let control = DesignControl {
            size: 5,
            ..Default::default()
        };
        let x = make_lhd(None, &space, &control).unwrap();
        assert_eq!(x.shape(), (5, 4));
        for r in 0..5 {
            let row: Vec<f64> = x.row(r).iter().copied().collect();
            assert!(space.contains(&row), "{row:?}");
        }
    }

    #[test]
    fn single_point_design() {
        let space = ParamSpace::numeric(vec![0.0], vec![1.0]).unwrap();
        let control = DesignControl {
            size: 1,
            ..Default::default()
        };
        let x = make_lhd(None, &space, &control).unwrap();
        assert_eq!(x.nrows(), 1);
        assert!((0.0..=1.0).contains(&x[(0, 0)]));
    }

    #[test]
    fn uniform_respects_bounds() {
        let space = ParamSpace::numeric(vec![-1.0, 0.0], vec![1.0, 10.0]).unwrap();
        let control = DesignControl {
            size: 5,
            ..Default::default()
        };
        let x = make_uniform(None, &space, &control).unwrap();
        assert_eq!(x.shape(), (5, 2));
        for r in 0..5 {
            assert!((-1.0..=1.0).contains(&x[(r, 0)]));
            assert!((0.0..=10.0).contains(&x[(r, 1)]));
        }
    }

    #[test]
    fn degenerate_dimension_gives_constant_rows() {
        let space = ParamSpace::numeric(vec![3.0], vec![3.0]).unwrap();
        let control = DesignControl {
            size: 4,
            ..Default::default()
        };
        let x = make_uniform(None, &space, &control).unwrap();
        assert!(x.iter().all(|&v| v == 3.0));
        let y = make_lhd(None, &space, &control).unwrap();
        assert!(y.iter().all(|&v| v == 3.0));
    }

    #[test]
    fn same_seed_same_design() {
        let space = ParamSpace::numeric(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let control = DesignControl::default();
        assert_eq!(
            make_uniform(None, &space, &control).unwrap(),
            make_uniform(None, &space, &control).unwrap()
        );
        assert_eq!(
            make_lhd(None, &space, &control).unwrap(),
            make_lhd(None, &space, &control).unwrap()
        );
    }

    #[test]
    fn replicates_duplicate_rows() {
        let space = ParamSpace::numeric(vec![0.0], vec![1.0]).unwrap();
        let control = DesignControl {
            size: 3,
            replicates: 2,
            ..Default::default()
        };
        let x = make_lhd(None, &space, &control).unwrap();
        assert_eq!(x.nrows(), 6);
        for r in 0..3 {
            assert_eq!(x[(2 * r, 0)], x[(2 * r + 1, 0)]);
        }
    }

    #[test]
    fn augmentation_returns_new_points_only() {
        let inner = ParamSpace::numeric(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let outer = ParamSpace::numeric(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let control = DesignControl {
            size: 50,
            ..Default::default()
        };
        let x1 = make_lhd(None, &inner, &control).unwrap();
        let x2 = make_lhd(Some(&x1), &outer, &control).unwrap();
        assert_eq!(x2.nrows(), 50);
        let wrong = DMatrix::<f64>::zeros(2, 3);
        assert!(make_lhd(Some(&wrong), &outer, &control).is_err());
    }

    #[test]
    fn invalid_controls() {
        let space = ParamSpace::numeric(vec![0.0], vec![1.0]).unwrap();
        let control = DesignControl {
            size: 0,
            ..Default::default()
        };
        assert!(make_lhd(None, &space, &control).is_err());
    }

    #[test]
    fn winner_beats_every_rejected_candidate() {
        let space = ParamSpace::numeric(vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 3.0]).unwrap();
        let control = DesignControl {
            size: 8,
            retries: 40,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let out = lhd_with_rng(None, &space, &control, &mut rng).unwrap();
        let best = out.candidate_scores[out.best_index];
        assert!(out.candidate_scores.iter().all(|&s| best >= s));
    }
}
