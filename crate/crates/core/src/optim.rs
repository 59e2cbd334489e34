//! Box-constrained optimizers used on surrogates and likelihoods: Latin
//! hypercube sampling search and a projected quasi-Newton local search.

use crate::design::{lhd_with_rng, DesignControl};
use crate::error::{Error, Result};
use crate::space::ParamSpace;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Batch objective: maps an `m x d` matrix to `m` values.
pub type BatchFn<'a> = dyn Fn(&DMatrix<f64>) -> DVector<f64> + 'a;

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub xbest: Vec<f64>,
    pub ybest: f64,
    pub count: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LhdSearchControl {
    pub fun_evals: usize,
    pub retries: usize,
    pub seed: u64,
}

impl Default for LhdSearchControl {
    fn default() -> Self {
        Self {
            fun_evals: 100,
            retries: 1,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalSearchControl {
    pub fun_evals: usize,
    /// Relative finite-difference step, scaled by each dimension's range.
    pub fd_step: f64,
    /// Stop once the projected gradient's largest entry falls below this.
    pub gtol: f64,
}

impl Default for LocalSearchControl {
    fn default() -> Self {
        Self {
            fun_evals: 100,
            fd_step: 1e-6,
            gtol: 1e-10,
        }
    }
}

/// Surrogate search strategy, selectable by name.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerKind {
    Lhd(LhdSearchControl),
    LocalBounded(LocalSearchControl),
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Lhd(LhdSearchControl::default())
    }
}

impl OptimizerKind {
    pub fn minimize(
        &self,
        start: Option<&[f64]>,
        fun: &BatchFn<'_>,
        lower: &[f64],
        upper: &[f64],
        seed: u64,
    ) -> Result<OptResult> {
        match self {
            OptimizerKind::Lhd(c) => {
                let c = LhdSearchControl { seed, ..c.clone() };
                optim_lhd(start.map(|s| DMatrix::from_row_slice(1, s.len(), s)).as_ref(), fun, lower, upper, &c)
            }
            OptimizerKind::LocalBounded(c) => optim_local_bounded(start, fun, lower, upper, c),
        }
    }

    pub fn fun_evals(&self) -> usize {
        match self {
            OptimizerKind::Lhd(c) => c.fun_evals,
            OptimizerKind::LocalBounded(c) => c.fun_evals,
        }
    }
}

/// Evaluates a Latin hypercube of `fun_evals` points and reports the best.
///
/// Rows of `start` are evaluated first and count against the budget.
pub fn optim_lhd(
    start: Option<&DMatrix<f64>>,
    fun: &BatchFn<'_>,
    lower: &[f64],
    upper: &[f64],
    control: &LhdSearchControl,
) -> Result<OptResult> {
    if control.fun_evals < 1 {
        return Err(Error::InvalidControl("funEvals must be at least 1".into()));
    }
    let space = ParamSpace::numeric(lower.to_vec(), upper.to_vec())?;
    let d = space.dim();
    let mut rows: Vec<DMatrix<f64>> = Vec::new();
    let mut used = 0;
    if let Some(s) = start {
        if s.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: s.ncols() });
        }
        let take = s.nrows().min(control.fun_evals);
        let mut head = s.rows(0, take).into_owned();
        space.snap_rows(&mut head);
        used = take;
        rows.push(head);
    }
    let remaining = control.fun_evals - used;
    if remaining > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(control.seed);
        let dc = DesignControl {
            size: remaining,
            retries: control.retries.max(1),
            replicates: 1,
            seed: control.seed,
        };
        rows.push(lhd_with_rng(None, &space, &dc, &mut rng)?.design);
    }
    let total: usize = rows.iter().map(|m| m.nrows()).sum();
    let mut x = DMatrix::zeros(total, d);
    let mut at = 0;
    for m in &rows {
        x.rows_mut(at, m.nrows()).copy_from(m);
        at += m.nrows();
    }
    let y = fun(&x);
    if y.len() != total {
        return Err(Error::DimensionMismatch { expected: total, got: y.len() });
    }
    let (ib, yb) = argmin(y.as_slice());
    Ok(OptResult {
        xbest: x.row(ib).iter().copied().collect(),
        ybest: yb,
        count: total,
        x,
        y,
        msg: "success".into(),
    })
}

/// Index and value of the smallest entry, treating NaN as +inf and breaking
/// ties by the earliest index.
pub(crate) fn argmin(y: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, &v) in y.iter().enumerate() {
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v < best.1 || i == 0 {
            best = (i, v);
        }
    }
    best
}

/// Keeps every evaluated point and enforces the evaluation budget.
struct Tracker<'f, 'a> {
    fun: &'f BatchFn<'a>,
    budget: usize,
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
}

impl Tracker<'_, '_> {
    fn remaining(&self) -> usize {
        self.budget - self.ys.len()
    }

    fn eval(&mut self, pts: &[Vec<f64>]) -> Vec<f64> {
        debug_assert!(pts.len() <= self.remaining());
        let d = pts[0].len();
        let m = DMatrix::from_fn(pts.len(), d, |r, c| pts[r][c]);
        let y = (self.fun)(&m);
        let out: Vec<f64> = y.iter().map(|&v| if v.is_nan() { f64::INFINITY } else { v }).collect();
        self.xs.extend(pts.iter().cloned());
        self.ys.extend(out.iter().copied());
        out
    }
}

/// Projected quasi-Newton (BFGS) descent with central finite-difference
/// gradients. Every evaluated point lies inside `[lower, upper]`.
pub fn optim_local_bounded(
    start: Option<&[f64]>,
    fun: &BatchFn<'_>,
    lower: &[f64],
    upper: &[f64],
    control: &LocalSearchControl,
) -> Result<OptResult> {
    if control.fun_evals < 1 {
        return Err(Error::InvalidControl("funEvals must be at least 1".into()));
    }
    let space = ParamSpace::numeric(lower.to_vec(), upper.to_vec())?;
    let d = space.dim();
    let mut x: Vec<f64> = match start {
        Some(s) if s.len() != d => return Err(Error::DimensionMismatch { expected: d, got: s.len() }),
        Some(s) => s.iter().enumerate().map(|(i, &v)| v.clamp(lower[i], upper[i])).collect(),
        None => (0..d).map(|i| 0.5 * (lower[i] + upper[i])).collect(),
    };
    let mut t = Tracker {
        fun,
        budget: control.fun_evals,
        xs: Vec::new(),
        ys: Vec::new(),
    };
    let mut fx = t.eval(std::slice::from_ref(&x))[0];
    if !fx.is_finite() {
        return Err(Error::NonFinite(format!("objective at start point {x:?} is {fx}")));
    }
    let steps: Vec<f64> = (0..d)
        .map(|i| control.fd_step * (upper[i] - lower[i]).max(f64::MIN_POSITIVE))
        .collect();
    let movable: Vec<usize> = (0..d).filter(|&i| upper[i] > lower[i]).collect();
    let max_range = movable.iter().map(|&i| upper[i] - lower[i]).fold(0.0, f64::max);

    let mut h = DMatrix::<f64>::identity(d, d);
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None; // (x, g) of the last iterate
    let mut msg = "budget exhausted";
    loop {
        if movable.is_empty() {
            msg = "converged";
            break;
        }
        if t.remaining() < 2 * movable.len() + 1 {
            break;
        }
        let g = fd_gradient(&mut t, &x, &steps, &movable, lower, upper);

        if let Some((px, pg)) = prev.take() {
            let s: Vec<f64> = (0..d).map(|i| x[i] - px[i]).collect();
            let yv: Vec<f64> = (0..d).map(|i| g[i] - pg[i]).collect();
            bfgs_update(&mut h, &s, &yv);
        }

        let free: Vec<bool> = (0..d)
            .map(|i| {
                movable.contains(&i)
                    && !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0))
            })
            .collect();
        let pg_norm = (0..d).filter(|&i| free[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if pg_norm <= control.gtol {
            msg = "converged";
            break;
        }

        let mut dir = vec![0.0; d];
        for i in (0..d).filter(|&i| free[i]) {
            dir[i] = -(0..d).filter(|&j| free[j]).map(|j| h[(i, j)] * g[j]).sum::<f64>();
        }
        let slope: f64 = (0..d).map(|i| dir[i] * g[i]).sum();
        if slope >= 0.0 || !slope.is_finite() {
            h = DMatrix::identity(d, d);
            for i in 0..d {
                dir[i] = if free[i] { -g[i] } else { 0.0 };
            }
        }
        // keep the first trial step within the box size
        let dnorm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut alpha = if dnorm > max_range { max_range / dnorm } else { 1.0 };

        let mut accepted = None;
        while t.remaining() >= 1 {
            let trial: Vec<f64> = (0..d)
                .map(|i| (x[i] + alpha * dir[i]).clamp(lower[i], upper[i]))
                .collect();
            let moved: f64 = (0..d).map(|i| (trial[i] - x[i]).abs()).fold(0.0, f64::max);
            if moved == 0.0 {
                break;
            }
            let ft = t.eval(std::slice::from_ref(&trial))[0];
            let decrease: f64 = (0..d).map(|i| g[i] * (trial[i] - x[i])).sum();
            if ft.is_finite() && ft <= fx + 1e-4 * decrease.min(0.0) && ft <= fx {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-20 {
                break;
            }
        }
        match accepted {
            Some((nx, nf)) => {
                prev = Some((x, g));
                x = nx;
                fx = nf;
            }
            None => {
                if t.remaining() >= 1 {
                    msg = "line search failed";
                }
                break;
            }
        }
    }

    let (ib, yb) = argmin(&t.ys);
    let count = t.ys.len();
    Ok(OptResult {
        x: DMatrix::from_fn(count, d, |r, c| t.xs[r][c]),
        y: DVector::from_vec(t.ys.clone()),
        xbest: t.xs[ib].clone(),
        ybest: yb,
        count,
        msg: msg.into(),
    })
}

fn fd_gradient(
    t: &mut Tracker<'_, '_>,
    x: &[f64],
    steps: &[f64],
    movable: &[usize],
    lower: &[f64],
    upper: &[f64],
) -> Vec<f64> {
    let mut pts = Vec::with_capacity(2 * movable.len());
    let mut widths = Vec::with_capacity(movable.len());
    for &i in movable {
        let hi = (x[i] + steps[i]).min(upper[i]);
        let lo = (x[i] - steps[i]).max(lower[i]);
        let mut p = x.to_vec();
        p[i] = hi;
        pts.push(p.clone());
        p[i] = lo;
        pts.push(p);
        widths.push(hi - lo);
    }
    let f = t.eval(&pts);
    let mut g = vec![0.0; x.len()];
    for (k, &i) in movable.iter().enumerate() {
        let diff = f[2 * k] - f[2 * k + 1];
        g[i] = if widths[k] > 0.0 && diff.is_finite() { diff / widths[k] } else { 0.0 };
    }
    g
}

fn bfgs_update(h: &mut DMatrix<f64>, s: &[f64], y: &[f64]) {
    let s = DVector::from_row_slice(s);
    let y = DVector::from_row_slice(y);
    let sy = s.dot(&y);
    if sy <= 1e-12 * s.norm() * y.norm() || !sy.is_finite() {
        return;
    }
    let rho = 1.0 / sy;
    let n = s.len();
    let i = DMatrix::<f64>::identity(n, n);
    let a = &i - rho * &s * y.transpose();
    let b = &i - rho * &y * s.transpose();
    *h = &a * &*h * &b + rho * &s * s.transpose();
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_fn(x.nrows(), |r, _| x.row(r).iter().map(|v| v * v).sum())
    }

    #[test]
    fn lhd_search_on_sphere() {
        // a single 100-point sample exceeds 5 for roughly one seed in seven,
        // so the bound is checked on the average over seeds
        let mut total = 0.0;
        for seed in 1..=40 {
            let c = LhdSearchControl { seed, ..Default::default() };
            let res = optim_lhd(None, &sphere, &[-10.0, -20.0], &[20.0, 8.0], &c).unwrap();
            assert_eq!(res.count, 100);
            let brute = res.y.iter().copied().fold(f64::INFINITY, f64::min);
            assert_eq!(res.ybest, brute);
            assert_eq!(sphere(&DMatrix::from_row_slice(1, 2, &res.xbest))[0], res.ybest);
            total += res.ybest;
        }
        assert!(total / 40.0 <= 5.0, "mean ybest = {}", total / 40.0);
    }

    #[test]
    fn lhd_search_with_start_only() {
        let start = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        let c = LhdSearchControl {
            fun_evals: 1,
            ..Default::default()
        };
        let res = optim_lhd(Some(&start), &sphere, &[-10.0, -20.0], &[20.0, 8.0], &c).unwrap();
        assert_eq!(res.count, 1);
        assert_eq!(res.ybest, 0.0);
    }

    #[test]
    fn lhd_search_rejects_zero_budget() {
        let c = LhdSearchControl {
            fun_evals: 0,
            ..Default::default()
        };
        assert!(optim_lhd(None, &sphere, &[0.0], &[1.0], &c).is_err());
    }

    #[test]
    fn local_search_on_sphere() {
        let res = optim_local_bounded(None, &sphere, &[-10.0, -20.0], &[20.0, 8.0], &LocalSearchControl::default())
            .unwrap();
        assert!(res.ybest <= 1e-8, "ybest = {}", res.ybest);
        assert!(res.count <= 100);
    }

    #[test]
    fn local_search_from_corner_stays_feasible() {
        let lower = [-10.0, -20.0];
        let upper = [20.0, 8.0];
        let corner = [20.0, -20.0];
        let res = optim_local_bounded(Some(&corner), &sphere, &lower, &upper, &LocalSearchControl::default()).unwrap();
        let f_corner = 800.0;
        assert!(res.ybest <= f_corner);
        for r in 0..res.x.nrows() {
            for c in 0..2 {
                assert!(res.x[(r, c)] >= lower[c] && res.x[(r, c)] <= upper[c]);
            }
        }
    }

    #[test]
    fn local_search_finds_interior_minimizer() {
        let m = [1.5, -2.25, 0.75];
        let f = move |x: &DMatrix<f64>| {
            DVector::from_fn(x.nrows(), |r, _| {
                let a = x[(r, 0)] - m[0];
                let b = x[(r, 1)] - m[1];
                let c = x[(r, 2)] - m[2];
                2.0 * a * a + b * b + 0.5 * c * c + 0.3 * a * b
            })
        };
        let c = LocalSearchControl {
            fun_evals: 400,
            ..Default::default()
        };
        let res = optim_local_bounded(None, &f, &[-5.0; 3], &[5.0; 3], &c).unwrap();
        for (x, target) in res.xbest.iter().zip(&m) {
            assert!((x - target).abs() < 1e-4, "{:?}", res.xbest);
        }
    }

    #[test]
    fn local_search_handles_active_bound() {
        // minimizer (-3, 0) lies outside; constrained optimum is (-1, 0)
        let f = |x: &DMatrix<f64>| DVector::from_fn(x.nrows(), |r, _| (x[(r, 0)] + 3.0).powi(2) + x[(r, 1)].powi(2));
        let res = optim_local_bounded(None, &f, &[-1.0, -1.0], &[1.0, 1.0], &LocalSearchControl::default()).unwrap();
        assert!((res.xbest[0] + 1.0).abs() < 1e-9);
        assert!(res.xbest[1].abs() < 1e-4);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let f = |x: &DMatrix<f64>| DVector::from_element(x.nrows(), f64::INFINITY);
        assert!(matches!(
            optim_local_bounded(None, &f, &[0.0], &[1.0], &LocalSearchControl::default()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn argmin_prefers_earliest_tie() {
        assert_eq!(argmin(&[3.0, 1.0, 1.0]), (1, 1.0));
        assert_eq!(argmin(&[f64::NAN, 2.0]), (1, 2.0));
    }
}
