//! Second-order response surfaces in coded units, with stationary point,
//! eigenanalysis and ridge-analysis descent paths.

use crate::error::{Error, Result};
use crate::surrogates::{check_cols, check_training, Prediction, Surrogate};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Largest coded radius reached by a descent path.
pub const PATH_RADIUS: f64 = 1.0;
pub const PATH_STEPS: usize = 10;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RsmControl {
    pub main_effects_only: bool,
    /// Follow the canonical axis from a saddle instead of the ridge path.
    pub canonical: bool,
}

#[derive(Debug, Clone)]
pub struct RsmFit {
    dim: usize,
    center: Vec<f64>,
    half: Vec<f64>,
    active: Vec<usize>,
    terms: Vec<String>,
    coef: DVector<f64>,
    b0: f64,
    b: DVector<f64>,
    big_b: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    stationary_coded: Option<DVector<f64>>,
    control: RsmControl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentPath {
    /// Path points in original units, one per row.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Coded distance of each step from its starting point.
    pub radii: Vec<f64>,
}

fn basis_names(active: &[usize], main_only: bool) -> Vec<String> {
    let mut names = vec!["(Intercept)".to_string()];
    names.extend(active.iter().map(|i| format!("x{}", i + 1)));
    if !main_only {
        for (a, &i) in active.iter().enumerate() {
            for &j in &active[a + 1..] {
                names.push(format!("x{}:x{}", i + 1, j + 1));
            }
        }
        names.extend(active.iter().map(|i| format!("x{}^2", i + 1)));
    }
    names
}

fn basis_row(z: &[f64], main_only: bool) -> Vec<f64> {
    let k = z.len();
    let mut row = Vec::with_capacity(1 + 2 * k + k * (k - 1) / 2);
    row.push(1.0);
    row.extend_from_slice(z);
    if !main_only {
        for a in 0..k {
            for b in (a + 1)..k {
                row.push(z[a] * z[b]);
            }
        }
        row.extend(z.iter().map(|v| v * v));
    }
    row
}

/// Columns that are (numerically) linear combinations of earlier ones.
fn deficient_columns(m: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..m.ncols() {
        let col = m.column(j).into_owned();
        let norm0 = col.norm();
        let mut v = col;
        for q in &basis {
            let proj = q.dot(&v);
            v -= q * proj;
        }
        for q in &basis {
            let proj = q.dot(&v);
            v -= q * proj;
        }
        let nv = v.norm();
        if norm0 == 0.0 || nv <= 1e-9 * norm0 {
            bad.push(j);
        } else {
            basis.push(v / nv);
        }
    }
    bad
}

pub fn fit_rsm(x: &DMatrix<f64>, y: &DVector<f64>, control: &RsmControl) -> Result<RsmFit> {
    check_training(x, y)?;
    let (n, d) = x.shape();
    let mut center = vec![0.0; d];
    let mut half = vec![1.0; d];
    let mut active = Vec::new();
    for c in 0..d {
        let col = x.column(c);
        let (mn, mx) = (col.min(), col.max());
        center[c] = 0.5 * (mx + mn);
        if mx > mn {
            half[c] = 0.5 * (mx - mn);
            active.push(c);
        }
    }
    if active.is_empty() {
        return Err(Error::InsufficientData("every input column is constant".into()));
    }
    let main_only = control.main_effects_only;
    let terms = basis_names(&active, main_only);
    let p = terms.len();
    let code_row = |r: usize| -> Vec<f64> { active.iter().map(|&c| (x[(r, c)] - center[c]) / half[c]).collect() };
    let mut design = DMatrix::zeros(n, p);
    for r in 0..n {
        for (j, v) in basis_row(&code_row(r), main_only).into_iter().enumerate() {
            design[(r, j)] = v;
        }
    }
    let bad = deficient_columns(&design);
    if !bad.is_empty() {
        return Err(Error::RankDeficient {
            terms: bad.into_iter().map(|j| terms[j].clone()).collect(),
        });
    }
    let coef = design
        .svd(true, true)
        .solve(y, 1e-14)
        .map_err(|e| Error::ModelFit(e.to_string()))?;

    let k = active.len();
    let b0 = coef[0];
    let b = DVector::from_iterator(k, coef.iter().skip(1).take(k).copied());
    let mut big_b = DMatrix::zeros(k, k);
    if !main_only {
        let mut at = 1 + k;
        for a in 0..k {
            for c in (a + 1)..k {
                big_b[(a, c)] = 0.5 * coef[at];
                big_b[(c, a)] = 0.5 * coef[at];
                at += 1;
            }
        }
        for a in 0..k {
            big_b[(a, a)] = coef[at + a];
        }
    }
    let (eigenvalues, eigenvectors) = sorted_eigen(&big_b);
    let scale = eigenvalues.amax().max(b.amax()).max(f64::MIN_POSITIVE);
    let nonsingular = eigenvalues.iter().all(|l| l.abs() > 1e-10 * scale);
    let stationary_coded = if !main_only && nonsingular {
        big_b.clone().lu().solve(&(&b * -0.5))
    } else {
        None
    };
    Ok(RsmFit {
        dim: d,
        center,
        half,
        active,
        terms,
        coef,
        b0,
        b,
        big_b,
        eigenvalues,
        eigenvectors,
        stationary_coded,
        control: control.clone(),
    })
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues in decreasing order.
fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let k = m.nrows();
    let e = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| e.eigenvalues[j].total_cmp(&e.eigenvalues[i]));
    let vals = DVector::from_iterator(k, order.iter().map(|&i| e.eigenvalues[i]));
    let vecs = DMatrix::from_fn(k, k, |r, c| e.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

impl RsmFit {
    /// Term names in coefficient order.
    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coef
    }

    pub fn intercept(&self) -> f64 {
        self.b0
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn quadratic(&self) -> &DMatrix<f64> {
        &self.big_b
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Original-unit column indices that enter the model.
    pub fn active_dims(&self) -> &[usize] {
        &self.active
    }

    /// Constant input columns left out of the basis.
    pub fn excluded_dims(&self) -> Vec<usize> {
        (0..self.dim).filter(|c| !self.active.contains(c)).collect()
    }

    pub fn stationary_coded(&self) -> Option<&DVector<f64>> {
        self.stationary_coded.as_ref()
    }

    pub fn stationary_original(&self) -> Option<Vec<f64>> {
        self.stationary_coded.as_ref().map(|z| self.decode(z.as_slice()))
    }

    /// True when the stationary point exists and the eigenvalues have mixed signs.
    pub fn is_saddle(&self) -> bool {
        self.stationary_coded.is_some() && self.eigenvalues[0] > 0.0 && self.eigenvalues[self.eigenvalues.len() - 1] < 0.0
    }

    /// Maps an original-unit point to coded coordinates of the active dims.
    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        self.active.iter().map(|&c| (x[c] - self.center[c]) / self.half[c]).collect()
    }

    /// Maps coded coordinates back to original units; excluded dims take
    /// their constant training value.
    pub fn decode(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.center.clone();
        for (a, &c) in self.active.iter().enumerate() {
            x[c] = self.center[c] + self.half[c] * z[a];
        }
        x
    }

    /// Fitted value as a function of coded coordinates.
    pub fn value_coded(&self, z: &DVector<f64>) -> f64 {
        self.b0 + self.b.dot(z) + z.dot(&(&self.big_b * z))
    }

    pub fn gradient_coded(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.b + &self.big_b * z * 2.0
    }

    /// Ridge-analysis point: minimizer of the fitted quadratic on the coded
    /// sphere of radius `r` about the origin.
    pub fn ridge_point(&self, r: f64) -> Result<DVector<f64>> {
        let k = self.b.len();
        if r == 0.0 {
            return Ok(DVector::zeros(k));
        }
        if self.b.amax().max(self.big_b.amax()) <= 1e-12 * self.b0.abs().max(1.0) {
            return Err(Error::ModelFit("descent direction is undefined for a flat surface".into()));
        }
        let lam = &self.eigenvalues;
        let v = &self.eigenvectors;
        let c = v.transpose() * &self.b;
        let lmin = lam[k - 1];
        let norm_at = |mu: f64| -> f64 {
            (0..k)
                .map(|i| {
                    let t = c[i] / (2.0 * (lam[i] - mu));
                    t * t
                })
                .sum::<f64>()
                .sqrt()
        };
        let coords = |mu: f64| DVector::from_fn(k, |i, _| -c[i] / (2.0 * (lam[i] - mu)));

        let scale = lam.amax().max(c.amax()).max(f64::MIN_POSITIVE);
        let tiny = 1e-12 * scale;
        // components along the lowest eigenspace
        let low: Vec<usize> = (0..k).filter(|&i| lam[i] - lmin <= tiny).collect();
        let low_weight: f64 = low.iter().map(|&i| c[i] * c[i]).sum::<f64>().sqrt();
        let z_tilde = if low_weight <= tiny {
            // hard case: the path cannot reach radius r through mu < lmin alone
            let partial = DVector::from_fn(k, |i, _| {
                if low.contains(&i) {
                    0.0
                } else {
                    -c[i] / (2.0 * (lam[i] - lmin))
                }
            });
            let pn = partial.norm();
            if pn >= r {
                bisect_mu(&norm_at, lmin, c.norm(), r, tiny).map(coords).unwrap_or(partial)
            } else {
                let mut z = partial;
                z[low[0]] += (r * r - pn * pn).sqrt();
                z
            }
        } else {
            let mu = bisect_mu(&norm_at, lmin, c.norm(), r, tiny).unwrap_or(lmin - c.norm() / (2.0 * r));
            coords(mu)
        };
        let z = v * z_tilde;
        let nz = z.norm();
        Ok(if nz > 0.0 { z * (r / nz) } else { z })
    }

    /// Ten-step descent path in original units.
    pub fn descent_path(&self) -> Result<DescentPath> {
        let radii: Vec<f64> = (1..=PATH_STEPS).map(|k| k as f64 * PATH_RADIUS / PATH_STEPS as f64).collect();
        let k = self.b.len();
        let coded: Vec<DVector<f64>> = if self.control.canonical && self.is_saddle() {
            let xs = self.stationary_coded.clone().unwrap_or_else(|| DVector::zeros(k));
            let axis = self.eigenvectors.column(k - 1).into_owned();
            let sign = if xs.dot(&axis) > 0.0 { -1.0 } else { 1.0 };
            radii.iter().map(|&r| &xs + &axis * (sign * r)).collect()
        } else {
            radii.iter().map(|&r| self.ridge_point(r)).collect::<Result<_>>()?
        };
        let x = DMatrix::from_fn(PATH_STEPS, self.dim, |r, c| self.decode(coded[r].as_slice())[c]);
        let y = DVector::from_iterator(PATH_STEPS, coded.iter().map(|z| self.value_coded(z)));
        Ok(DescentPath { x, y, radii })
    }
}

/// Finds `mu < lmin` with `norm_at(mu) = r`, where `norm_at` increases on
/// `(-inf, lmin)`.
fn bisect_mu(norm_at: &dyn Fn(f64) -> f64, lmin: f64, cnorm: f64, r: f64, tiny: f64) -> Option<f64> {
    let mut lo = lmin - cnorm / (2.0 * r) - tiny;
    if norm_at(lo) > r {
        return None;
    }
    let mut hi = lmin;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm_at(mid) < r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

impl Surrogate for RsmFit {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, x: &DMatrix<f64>) -> Result<Prediction> {
        check_cols(self.dim, x)?;
        let mean = DVector::from_fn(x.nrows(), |r, _| {
            let row: Vec<f64> = x.row(r).iter().copied().collect();
            let z = self.encode(&row);
            let basis = basis_row(&z, self.control.main_effects_only);
            basis.iter().zip(self.coef.iter()).map(|(a, b)| a * b).sum()
        });
        Ok(Prediction { mean, sd: None })
    }
}
