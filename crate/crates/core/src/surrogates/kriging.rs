//! Kriging with an exponential kernel, optional nugget, Hamming distance on
//! factor dimensions and re-interpolated predictive uncertainty.

use super::{check_cols, check_training, Prediction, Surrogate};
use crate::error::{Error, Result};
use crate::optim::{optim_lhd, optim_local_bounded, LhdSearchControl, LocalSearchControl, OptResult};
use crate::space::VarType;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

const PENALTY: f64 = 1e10;

/// How the likelihood is searched over `(log10 theta, log10 lambda)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThetaSearch {
    /// Latin hypercube sampling of the whole budget.
    Lhd,
    /// Bounded quasi-Newton from theta = n / (100 d) and the central lambda.
    LocalBounded,
    /// Half the budget on a Latin hypercube, the rest refining its best point.
    #[default]
    LhdThenLocal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrigingControl {
    pub alg_theta: ThetaSearch,
    /// Per-column tags; `None` treats every column as numeric.
    pub types: Option<Vec<VarType>>,
    /// Likelihood evaluations; `None` means 200 per free parameter.
    pub budget: Option<usize>,
    pub log10_theta_bounds: (f64, f64),
    pub log10_lambda_bounds: (f64, f64),
    /// When false the nugget is fixed at zero and the model interpolates.
    pub use_lambda: bool,
    pub reinterpolate: bool,
    pub seed: u64,
}

impl Default for KrigingControl {
    fn default() -> Self {
        Self {
            alg_theta: ThetaSearch::default(),
            types: None,
            budget: None,
            log10_theta_bounds: (-6.0, 2.0),
            log10_lambda_bounds: (-6.0, 0.0),
            use_lambda: true,
            reinterpolate: true,
            seed: 1,
        }
    }
}

/// Correlation between two points in normalized coordinates.
pub fn kernel_value(a: &[f64], b: &[f64], theta: &[f64], p: &[f64], types: &[VarType]) -> Result<f64> {
    let d = a.len();
    for len in [b.len(), theta.len(), p.len(), types.len()] {
        if len != d {
            return Err(Error::DimensionMismatch { expected: d, got: len });
        }
    }
    let mut s = 0.0;
    for i in 0..d {
        s += theta[i] * dim_distance(a[i], b[i], p[i], types[i]);
    }
    Ok((-s).exp())
}

fn dim_distance(a: f64, b: f64, p: f64, t: VarType) -> f64 {
    match t {
        VarType::Factor => {
            if a != b {
                1.0
            } else {
                0.0
            }
        }
        _ => {
            let diff = (a - b).abs();
            if p == 2.0 {
                diff * diff
            } else {
                diff.powf(p)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct KrigingFit {
    x: DMatrix<f64>,
    lo: Vec<f64>,
    scale: Vec<f64>,
    types: Vec<VarType>,
    theta: Vec<f64>,
    p: Vec<f64>,
    lambda: f64,
    mu_hat: f64,
    sigma2_hat: f64,
    chol_l: DMatrix<f64>,
    alpha: DVector<f64>,
    reinterp: Option<Reinterp>,
    likelihood_evals: usize,
    neg_log_likelihood: f64,
}

#[derive(Debug, Clone)]
struct Reinterp {
    chol_l: DMatrix<f64>,
    sigma2: f64,
}

/// Pairwise per-dimension distances packed by upper-triangle index.
struct LikData<'a> {
    n: usize,
    dists: Vec<Vec<f64>>,
    y: &'a DVector<f64>,
}

impl LikData<'_> {
    fn correlation(&self, theta: &[f64], lambda: f64) -> DMatrix<f64> {
        let n = self.n;
        let mut psi = DMatrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            psi[(i, i)] = 1.0 + lambda;
            for j in (i + 1)..n {
                let s: f64 = theta.iter().zip(&self.dists).map(|(t, d)| t * d[k]).sum();
                let v = (-s).exp();
                psi[(i, j)] = v;
                psi[(j, i)] = v;
                k += 1;
            }
        }
        psi
    }

    /// Concentrated negative log-likelihood plus the GLS estimates.
    fn evaluate(&self, theta: &[f64], lambda: f64) -> Option<Concentrated> {
        let psi = self.correlation(theta, lambda);
        let chol = Cholesky::new(psi)?;
        let n = self.n as f64;
        let ones = DVector::from_element(self.n, 1.0);
        let pinv_one = chol.solve(&ones);
        let pinv_y = chol.solve(self.y);
        let denom = pinv_one.sum();
        if !(denom.is_finite() && denom > 0.0) {
            return None;
        }
        let mu = pinv_y.sum() / denom;
        let alpha = &pinv_y - &pinv_one * mu;
        let resid = self.y.add_scalar(-mu);
        let sigma2 = (resid.dot(&alpha) / n).max(0.0);
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let nll = 0.5 * n * sigma2.max(f64::MIN_POSITIVE).ln() + 0.5 * log_det;
        if !nll.is_finite() {
            return None;
        }
        Some(Concentrated {
            nll,
            mu,
            sigma2,
            alpha,
            chol,
        })
    }
}

struct Concentrated {
    nll: f64,
    mu: f64,
    sigma2: f64,
    alpha: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

/// Fits a Kriging model by maximum likelihood over activity parameters and
/// (optionally) the nugget.
pub fn fit_kriging(x: &DMatrix<f64>, y: &DVector<f64>, control: &KrigingControl) -> Result<KrigingFit> {
    check_training(x, y)?;
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::InsufficientData("Kriging needs at least 2 rows".into()));
    }
    let types = match &control.types {
        Some(t) if t.len() != d => return Err(Error::DimensionMismatch { expected: d, got: t.len() }),
        Some(t) => t.clone(),
        None => vec![VarType::Numeric; d],
    };
    let (tl, tu) = control.log10_theta_bounds;
    let (ll, lu) = control.log10_lambda_bounds;
    if !(tl <= tu && ll <= lu && tl.is_finite() && tu.is_finite() && ll.is_finite() && lu.is_finite()) {
        return Err(Error::InvalidControl("log10 bounds must be finite and ordered".into()));
    }

    let mut lo = vec![0.0; d];
    let mut scale = vec![1.0; d];
    for c in 0..d {
        let col = x.column(c);
        let (mn, mx) = (col.min(), col.max());
        lo[c] = mn;
        if mx > mn && types[c] != VarType::Factor {
            scale[c] = mx - mn;
        }
    }
    let xn = normalize(x, &lo, &scale, &types);
    let p = vec![2.0; d];

    let mut dists = vec![Vec::with_capacity(n * (n - 1) / 2); d];
    for i in 0..n {
        for j in (i + 1)..n {
            for c in 0..d {
                dists[c].push(dim_distance(xn[(i, c)], xn[(j, c)], p[c], types[c]));
            }
        }
    }
    let data = LikData { n, dists, y };

    let n_par = d + usize::from(control.use_lambda);
    let budget = control.budget.unwrap_or(200 * n_par);
    if budget < 1 {
        return Err(Error::InvalidControl("likelihood budget must be at least 1".into()));
    }
    let decode = |v: &[f64]| -> (Vec<f64>, f64) {
        let theta = v[..d].iter().map(|t| 10f64.powf(*t)).collect();
        let lambda = if control.use_lambda { 10f64.powf(v[d]) } else { 0.0 };
        (theta, lambda)
    };

    let constant = y.max() == y.min();
    let (params, evals) = if constant {
        // flat likelihood; any setting reproduces the constant
        let mut v = vec![0.0f64.clamp(tl, tu); d];
        if control.use_lambda {
            v.push(ll);
        }
        (v, 0)
    } else {
        let objective = |m: &DMatrix<f64>| {
            let vals: Vec<f64> = (0..m.nrows())
                .into_par_iter()
                .map(|r| {
                    let row: Vec<f64> = m.row(r).iter().copied().collect();
                    let (theta, lambda) = decode(&row);
                    data.evaluate(&theta, lambda).map_or(PENALTY, |c| c.nll)
                })
                .collect();
            DVector::from_vec(vals)
        };
        let mut lower = vec![tl; d];
        let mut upper = vec![tu; d];
        if control.use_lambda {
            lower.push(ll);
            upper.push(lu);
        }
        let t0 = (n as f64 / (100.0 * d as f64)).log10().clamp(tl, tu);
        let mut start = vec![t0; d];
        if control.use_lambda {
            start.push(0.5 * (ll + lu));
        }
        let res = search(&objective, &lower, &upper, &start, budget, control)?;
        (res.xbest, res.count)
    };

    let (theta, lambda) = decode(&params);
    let conc = data.evaluate(&theta, lambda).ok_or(Error::SingularCorrelation { lambda })?;
    let reinterp = if control.reinterpolate && lambda > 0.0 {
        reinterpolation(&data, &theta, lambda, &conc)
    } else {
        None
    };
    Ok(KrigingFit {
        x: xn,
        lo,
        scale,
        types,
        theta,
        p,
        lambda,
        mu_hat: conc.mu,
        sigma2_hat: conc.sigma2,
        chol_l: conc.chol.l(),
        alpha: conc.alpha,
        reinterp,
        likelihood_evals: evals,
        neg_log_likelihood: conc.nll,
    })
}

fn search(
    objective: &(dyn Fn(&DMatrix<f64>) -> DVector<f64> + Sync),
    lower: &[f64],
    upper: &[f64],
    start: &[f64],
    budget: usize,
    control: &KrigingControl,
) -> Result<OptResult> {
    let lhd = |evals| {
        optim_lhd(
            None,
            objective,
            lower,
            upper,
            &LhdSearchControl {
                fun_evals: evals,
                retries: 1,
                seed: control.seed,
            },
        )
    };
    let local = |start: Option<&[f64]>, evals| {
        optim_local_bounded(
            start,
            objective,
            lower,
            upper,
            &LocalSearchControl {
                fun_evals: evals,
                ..Default::default()
            },
        )
    };
    match control.alg_theta {
        ThetaSearch::Lhd => lhd(budget),
        ThetaSearch::LocalBounded => local(Some(start), budget),
        ThetaSearch::LhdThenLocal => {
            let first = budget.div_ceil(2);
            let global = lhd(first)?;
            let rest = budget - global.count;
            if rest == 0 || global.ybest >= PENALTY {
                return Ok(global);
            }
            let refined = local(Some(&global.xbest), rest)?;
            let count = global.count + refined.count;
            let best = if refined.ybest < global.ybest { refined } else { global };
            Ok(OptResult { count, ..best })
        }
    }
}

fn reinterpolation(data: &LikData<'_>, theta: &[f64], lambda: f64, conc: &Concentrated) -> Option<Reinterp> {
    // alpha' (Psi - lambda I) alpha with Psi alpha = y - mu
    let resid = data.y.add_scalar(-conc.mu);
    let sigma2 = ((resid.dot(&conc.alpha) - lambda * conc.alpha.norm_squared()) / data.n as f64).max(0.0);
    let base = data.correlation(theta, 0.0);
    for jitter in [0.0, 1e-14, 1e-12, 1e-10, 1e-8] {
        let mut m = base.clone();
        for i in 0..data.n {
            m[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(m) {
            return Some(Reinterp { chol_l: c.l(), sigma2 });
        }
    }
    None
}

fn normalize(x: &DMatrix<f64>, lo: &[f64], scale: &[f64], types: &[VarType]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| {
        if types[c] == VarType::Factor {
            x[(r, c)]
        } else {
            (x[(r, c)] - lo[c]) / scale[c]
        }
    })
}

impl KrigingFit {
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu_hat(&self) -> f64 {
        self.mu_hat
    }

    pub fn sigma2_hat(&self) -> f64 {
        self.sigma2_hat
    }

    pub fn types(&self) -> &[VarType] {
        &self.types
    }

    pub fn likelihood_evals(&self) -> usize {
        self.likelihood_evals
    }

    pub fn neg_log_likelihood(&self) -> f64 {
        self.neg_log_likelihood
    }

    pub fn reinterpolates(&self) -> bool {
        self.reinterp.is_some()
    }

    fn correlations(&self, row: &[f64]) -> DVector<f64> {
        let n = self.x.nrows();
        DVector::from_fn(n, |i, _| {
            let s: f64 = (0..row.len())
                .map(|c| self.theta[c] * dim_distance(row[c], self.x[(i, c)], self.p[c], self.types[c]))
                .sum();
            (-s).exp()
        })
    }
}

impl Surrogate for KrigingFit {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn predict(&self, x: &DMatrix<f64>) -> Result<Prediction> {
        check_cols(self.dim(), x)?;
        let xn = normalize(x, &self.lo, &self.scale, &self.types);
        let m = xn.nrows();
        let rows: Vec<(f64, f64)> = (0..m)
            .into_par_iter()
            .map(|r| {
                let row: Vec<f64> = xn.row(r).iter().copied().collect();
                let psi = self.correlations(&row);
                let mean = self.mu_hat + psi.dot(&self.alpha);
                let var = match &self.reinterp {
                    Some(ri) => ri.sigma2 * (1.0 - quad_form(&ri.chol_l, &psi)),
                    None => self.sigma2_hat * (1.0 + self.lambda - quad_form(&self.chol_l, &psi)),
                };
                (mean, var.max(0.0).sqrt())
            })
            .collect();
        Ok(Prediction {
            mean: DVector::from_iterator(m, rows.iter().map(|r| r.0)),
            sd: Some(DVector::from_iterator(m, rows.iter().map(|r| r.1))),
        })
    }
}

/// `psi' (L L')^{-1} psi` via one forward substitution.
fn quad_form(l: &DMatrix<f64>, psi: &DVector<f64>) -> f64 {
    l.solve_lower_triangular(psi).map_or(f64::INFINITY, |v| v.norm_squared())
}
