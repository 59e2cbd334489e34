//! Built-in test functions, simulated annealing and the SANN tuning target.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::f64::consts::{E, PI};

/// An objective maps each row of `x` to one value. `seeds`, when given, holds
/// one seed per row for stochastic objectives.
pub trait Objective: Send + Sync {
    fn evaluate(&self, x: &DMatrix<f64>, seeds: Option<&[u64]>) -> Result<DVector<f64>>;

    /// Whether results depend on the seed.
    fn is_stochastic(&self) -> bool {
        false
    }
}

/// Wraps a deterministic batch function.
pub struct FnObjective<F>(pub F);

impl<F> Objective for FnObjective<F>
where
    F: Fn(&DMatrix<f64>) -> DVector<f64> + Send + Sync,
{
    fn evaluate(&self, x: &DMatrix<f64>, _seeds: Option<&[u64]>) -> Result<DVector<f64>> {
        Ok((self.0)(x))
    }
}

/// Wraps a per-row function of a point and an optional seed.
pub struct SeededObjective<F>(pub F);

impl<F> Objective for SeededObjective<F>
where
    F: Fn(&[f64], Option<u64>) -> f64 + Send + Sync,
{
    fn evaluate(&self, x: &DMatrix<f64>, seeds: Option<&[u64]>) -> Result<DVector<f64>> {
        check_seeds(x, seeds)?;
        Ok(DVector::from_fn(x.nrows(), |r, _| {
            let row: Vec<f64> = x.row(r).iter().copied().collect();
            (self.0)(&row, seeds.map(|s| s[r]))
        }))
    }

    fn is_stochastic(&self) -> bool {
        true
    }
}

fn check_seeds(x: &DMatrix<f64>, seeds: Option<&[u64]>) -> Result<()> {
    match seeds {
        Some(s) if s.len() != x.nrows() => Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: s.len(),
        }),
        _ => Ok(()),
    }
}

fn rowwise(x: &DMatrix<f64>, f: impl Fn(&[f64]) -> f64) -> DVector<f64> {
    DVector::from_fn(x.nrows(), |r, _| {
        let row: Vec<f64> = x.row(r).iter().copied().collect();
        f(&row)
    })
}

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn fun_sphere(x: &DMatrix<f64>) -> DVector<f64> {
    rowwise(x, sphere)
}

pub fn cubic(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v * v - 1.0).sum()
}

pub fn fun_cubic(x: &DMatrix<f64>) -> DVector<f64> {
    rowwise(x, cubic)
}

pub fn branin(x1: f64, x2: f64) -> f64 {
    let a = x2 - 5.1 / (4.0 * PI * PI) * x1 * x1 + 5.0 / PI * x1 - 6.0;
    a * a + 10.0 * (1.0 - 1.0 / (8.0 * PI)) * x1.cos() + 10.0
}

pub fn fun_branin(x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x.ncols() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: x.ncols() });
    }
    Ok(rowwise(x, |r| branin(r[0], r[1])))
}

/// Branin shifted by +1, -1 or 0 for factor levels 1, 2 and 3.
pub fn branin_factor(x1: f64, x2: f64, level: f64) -> Result<f64> {
    let shift = match level {
        1.0 => 1.0,
        2.0 => -1.0,
        3.0 => 0.0,
        l => return Err(Error::InvalidControl(format!("factor level must be 1, 2 or 3, got {l}"))),
    };
    Ok(branin(x1, x2) + shift)
}

pub fn fun_branin_factor(x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x.ncols() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, got: x.ncols() });
    }
    let vals = (0..x.nrows())
        .map(|r| branin_factor(x[(r, 0)], x[(r, 1)], x[(r, 2)]))
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(vals))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SannParams {
    pub par: Vec<f64>,
    pub maxit: usize,
    pub temp: f64,
    pub tmax: usize,
    pub seed: u64,
}

impl Default for SannParams {
    fn default() -> Self {
        Self {
            par: vec![10.0, 10.0],
            maxit: 100,
            temp: 10.0,
            tmax: 10,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SannResult {
    pub par: Vec<f64>,
    pub value: f64,
    /// Proposals evaluated.
    pub counts: usize,
}

/// Metropolis acceptance: improvements always, worse moves with
/// probability `exp(-delta / t)`.
pub fn accept(delta: f64, t: f64, u: f64) -> bool {
    delta <= 0.0 || u < (-delta / t).exp()
}

/// Temperature during the stage containing proposal `i` (1-based).
pub fn stage_temperature(temp: f64, tmax: usize, i: usize) -> f64 {
    let j = (i - 1) / tmax;
    temp / ((j * tmax) as f64 + E).ln()
}

/// Simulated annealing with logarithmic cooling and Gaussian proposals.
/// The start point is evaluated once, then `maxit` proposals follow.
pub fn sann_minimize(f: &dyn Fn(&[f64]) -> f64, params: &SannParams) -> Result<SannResult> {
    if params.maxit < 1 {
        return Err(Error::InvalidControl("maxit must be at least 1".into()));
    }
    if params.tmax < 1 {
        return Err(Error::InvalidControl("tmax must be at least 1".into()));
    }
    if !(params.temp > 0.0 && params.temp.is_finite()) {
        return Err(Error::InvalidControl(format!("temp must be positive, got {}", params.temp)));
    }
    if params.par.is_empty() {
        return Err(Error::DimensionMismatch { expected: 1, got: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut x = params.par.clone();
    let mut fx = f(&x);
    let mut best = (x.clone(), fx);
    for i in 1..=params.maxit {
        let t = stage_temperature(params.temp, params.tmax, i);
        let sd = (t / params.temp).max(1e-8);
        let y: Vec<f64> = x
            .iter()
            .map(|v| v + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let fy = f(&y);
        let delta = fy - fx;
        let take = if delta <= 0.0 {
            true
        } else {
            accept(delta, t, rng.random::<f64>())
        };
        if take && !fy.is_nan() {
            x = y;
            fx = fy;
            if fx < best.1 || best.1.is_nan() {
                best = (x.clone(), fx);
            }
        }
    }
    Ok(SannResult {
        par: best.0,
        value: best.1,
        counts: params.maxit,
    })
}

/// Problem solved by SANN when it is the tuning target.
#[derive(Debug, Clone, PartialEq)]
pub struct SannScenario {
    pub x0: Vec<f64>,
    pub maxit: usize,
    /// Seed used for rows that arrive without one.
    pub seed: u64,
}

impl Default for SannScenario {
    fn default() -> Self {
        Self {
            x0: vec![10.0, 10.0],
            maxit: 100,
            seed: 1,
        }
    }
}

/// Runs SANN on the sphere for each `(temp, tmax)` row and returns the final
/// best values.
pub fn sann2spot(algpar: &DMatrix<f64>, scenario: &SannScenario, seeds: Option<&[u64]>) -> Result<DVector<f64>> {
    if algpar.ncols() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: algpar.ncols() });
    }
    check_seeds(algpar, seeds)?;
    let vals = (0..algpar.nrows())
        .into_par_iter()
        .map(|r| {
            let temp = algpar[(r, 0)];
            if temp.is_nan() || temp <= 0.0 {
                return Err(Error::InvalidControl(format!("temp must be positive, got {temp}")));
            }
            let params = SannParams {
                par: scenario.x0.clone(),
                maxit: scenario.maxit,
                temp,
                tmax: algpar[(r, 1)].round().max(1.0) as usize,
                seed: seeds.map_or(scenario.seed, |s| s[r]),
            };
            sann_minimize(&sphere, &params).map(|res| res.value)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(vals))
}

/// Built-in objective selectable by name.
#[derive(Debug, Clone, PartialEq)]
pub enum NamedObjective {
    Sphere,
    Cubic,
    Branin,
    BraninFactor,
    SannSphere(SannScenario),
}

impl NamedObjective {
    pub const NAMES: [&'static str; 5] = ["sphere", "cubic", "branin", "braninFactor", "sannSphere"];

    pub fn from_name(name: &str, scenario: SannScenario) -> Result<Self> {
        Ok(match name {
            "sphere" | "funSphere" => NamedObjective::Sphere,
            "cubic" | "funCubic" => NamedObjective::Cubic,
            "branin" | "funBranin" => NamedObjective::Branin,
            "braninFactor" | "funBraninFactor" => NamedObjective::BraninFactor,
            "sannSphere" | "sann2spot" => NamedObjective::SannSphere(scenario),
            other => {
                return Err(Error::InvalidControl(format!(
                    "unknown objective {other:?}; expected one of {}",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            NamedObjective::Sphere => "sphere",
            NamedObjective::Cubic => "cubic",
            NamedObjective::Branin => "branin",
            NamedObjective::BraninFactor => "braninFactor",
            NamedObjective::SannSphere(_) => "sannSphere",
        }
    }
}

impl Objective for NamedObjective {
    fn evaluate(&self, x: &DMatrix<f64>, seeds: Option<&[u64]>) -> Result<DVector<f64>> {
        match self {
            NamedObjective::Sphere => Ok(fun_sphere(x)),
            NamedObjective::Cubic => Ok(fun_cubic(x)),
            NamedObjective::Branin => fun_branin(x),
            NamedObjective::BraninFactor => fun_branin_factor(x),
            NamedObjective::SannSphere(s) => sann2spot(x, s, seeds),
        }
    }

    fn is_stochastic(&self) -> bool {
        matches!(self, NamedObjective::SannSphere(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sphere_values() {
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert_eq!(fun_sphere(&x).as_slice(), &[5.0, 0.0, 3.0]);
    }

    #[test]
    fn cubic_values() {
        assert_eq!(cubic(&[1.0, 1.0]), 0.0);
        assert_eq!(cubic(&[0.0, 0.0]), -2.0);
        assert_eq!(cubic(&[1.0]), 0.0);
    }

    #[test]
    fn branin_values() {
        assert_abs_diff_eq!(branin(1.0, 2.0), 21.62764, epsilon = 1e-5);
        assert_abs_diff_eq!(branin(PI, 2.275), 0.397887, epsilon = 1e-5);
        for i in 0..=60 {
            for j in 0..=60 {
                let x1 = -5.0 + 15.0 * i as f64 / 60.0;
                let x2 = 15.0 * j as f64 / 60.0;
                assert!(branin(x1, x2) >= 0.397887 - 1e-6);
            }
        }
    }

    #[test]
    fn branin_factor_levels() {
        let b = branin(1.0, 2.0);
        assert_eq!(branin_factor(1.0, 2.0, 3.0).unwrap(), b);
        assert_eq!(branin_factor(1.0, 2.0, 1.0).unwrap(), b + 1.0);
        assert_eq!(branin_factor(1.0, 2.0, 2.0).unwrap(), b - 1.0);
        assert!(branin_factor(1.0, 2.0, 4.0).is_err());
    }

    #[test]
    fn improving_moves_always_accepted() {
        for u in [0.0, 0.5, 0.999_999] {
            assert!(accept(-1.0, 1e-300, u));
            assert!(accept(0.0, 5.0, u));
        }
        assert!(!accept(1.0, 1.0, 0.99));
        assert!(accept(1.0, 1.0, 0.3));
    }

    #[test]
    fn cooling_schedule() {
        assert_abs_diff_eq!(stage_temperature(10.0, 10, 1), 10.0, epsilon = 1e-12);
        assert_eq!(stage_temperature(10.0, 10, 10), 10.0);
        assert_abs_diff_eq!(stage_temperature(10.0, 10, 11), 10.0 / (10.0 + E).ln(), epsilon = 1e-12);
    }

    #[test]
    fn sann_single_iteration() {
        let p = SannParams {
            maxit: 1,
            ..Default::default()
        };
        let res = sann_minimize(&sphere, &p).unwrap();
        assert_eq!(res.counts, 1);
        assert!(res.value <= 200.0);
        assert_eq!(sphere(&res.par), res.value);
    }

    #[test]
    fn sann_greedy_limit() {
        let p = SannParams {
            temp: 1e-300,
            maxit: 50,
            ..Default::default()
        };
        let res = sann_minimize(&sphere, &p).unwrap();
        assert!(res.value <= 200.0);
    }

    #[test]
    fn sann_mean_over_seeds() {
        let mean = (1..=100)
            .map(|s| {
                let p = SannParams {
                    seed: s,
                    ..Default::default()
                };
                sann_minimize(&sphere, &p).unwrap().value
            })
            .sum::<f64>()
            / 100.0;
        assert!((1.0..=200.0).contains(&mean), "mean = {mean}");
    }

    #[test]
    fn sann_best_ever_equals_objective_at_par() {
        let p = SannParams {
            temp: 50.0,
            tmax: 2,
            seed: 9,
            ..Default::default()
        };
        let res = sann_minimize(&sphere, &p).unwrap();
        assert_eq!(res.value, sphere(&res.par));
    }

    #[test]
    fn sann_rejects_bad_temp() {
        let p = SannParams {
            temp: 0.0,
            ..Default::default()
        };
        assert!(sann_minimize(&sphere, &p).is_err());
        let x = DMatrix::from_row_slice(1, 2, &[-1.0, 10.0]);
        assert!(sann2spot(&x, &SannScenario::default(), None).is_err());
    }

    #[test]
    fn sann2spot_shapes() {
        for n in [1, 2, 5] {
            let x = DMatrix::from_fn(n, 2, |r, c| if c == 0 { 1.0 + r as f64 } else { 10.0 });
            let y = sann2spot(&x, &SannScenario::default(), None).unwrap();
            assert_eq!(y.len(), n);
            assert!(y.iter().all(|v| v.is_finite() && *v > 0.0));
        }
    }

    #[test]
    fn sann2spot_low_temp_high_tmax_wins() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 100.0, 100.0, 1.0]);
        let mut sums = [0.0; 2];
        for s in 1..=30u64 {
            let y = sann2spot(&x, &SannScenario::default(), Some(&[s, s])).unwrap();
            sums[0] += y[0];
            sums[1] += y[1];
        }
        assert!(sums[0] < sums[1], "{sums:?}");
    }

    #[test]
    fn names_round_trip() {
        for n in NamedObjective::NAMES {
            assert_eq!(NamedObjective::from_name(n, SannScenario::default()).unwrap().name(), n);
        }
        assert!(NamedObjective::from_name("rosenbrock", SannScenario::default()).is_err());
    }
}
