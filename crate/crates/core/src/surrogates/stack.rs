//! Stacked ensemble: member surrogates weighted by nonnegative least squares
//! on out-of-fold predictions.

use super::{check_cols, check_training, fit_forest, fit_kriging, nnls, FittedModel, ForestControl, KrigingControl};
use super::{Prediction, Surrogate};
use crate::error::{Error, Result};
use crate::rsm::{fit_rsm, RsmControl};
use crate::space::VarType;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum StackMember {
    Kriging(KrigingControl),
    Forest(ForestControl),
    Rsm(RsmControl),
}

impl StackMember {
    pub fn name(&self) -> &'static str {
        match self {
            StackMember::Kriging(_) => "kriging",
            StackMember::Forest(_) => "forest",
            StackMember::Rsm(_) => "rsm",
        }
    }

    fn fit(&self, x: &DMatrix<f64>, y: &DVector<f64>, types: &Option<Vec<VarType>>, seed: u64) -> Result<FittedModel> {
        Ok(match self {
            StackMember::Kriging(c) => {
                let c = KrigingControl {
                    types: types.clone().or_else(|| c.types.clone()),
                    seed,
                    ..c.clone()
                };
                FittedModel::Kriging(fit_kriging(x, y, &c)?)
            }
            StackMember::Forest(c) => FittedModel::Forest(fit_forest(x, y, &ForestControl { seed, ..c.clone() })?),
            StackMember::Rsm(c) => FittedModel::Rsm(fit_rsm(x, y, c)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackControl {
    pub members: Vec<StackMember>,
    pub folds: usize,
    pub types: Option<Vec<VarType>>,
    pub seed: u64,
}

impl Default for StackControl {
    fn default() -> Self {
        Self {
            members: vec![
                StackMember::Kriging(KrigingControl::default()),
                StackMember::Forest(ForestControl::default()),
                StackMember::Rsm(RsmControl::default()),
            ],
            folds: 5,
            types: None,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StackFit {
    names: Vec<&'static str>,
    members: Vec<FittedModel>,
    weights: Vec<f64>,
    dim: usize,
}

impl StackFit {
    /// Names of the members that survived fitting, aligned with `weights`.
    pub fn member_names(&self) -> &[&'static str] {
        &self.names
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn members(&self) -> &[FittedModel] {
        &self.members
    }
}

pub fn fit_stack(x: &DMatrix<f64>, y: &DVector<f64>, control: &StackControl) -> Result<StackFit> {
    check_training(x, y)?;
    let n = x.nrows();
    if control.folds < 2 || n < control.folds {
        return Err(Error::InvalidControl(format!(
            "stacking needs n >= folds >= 2 (n = {n}, folds = {})",
            control.folds
        )));
    }
    if control.members.is_empty() {
        return Err(Error::InvalidControl("stack has no members".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(control.seed));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % control.folds;
    }

    let mut names = Vec::new();
    let mut members = Vec::new();
    let mut oof_cols = Vec::new();
    let mut failures = Vec::new();
    for m in &control.members {
        match fit_member(m, x, y, control, &fold_of) {
            Ok((fit, oof)) => {
                names.push(m.name());
                members.push(fit);
                oof_cols.push(oof);
            }
            Err(e) => failures.push(format!("{}: {e}", m.name())),
        }
    }
    if members.is_empty() {
        return Err(Error::ModelFit(format!("every stack member failed ({})", failures.join("; "))));
    }

    let a = DMatrix::from_columns(&oof_cols);
    let mut w: Vec<f64> = nnls(&a, y).iter().copied().collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 && total.is_finite() {
        w.iter_mut().for_each(|v| *v /= total);
    } else {
        let mse: Vec<f64> = oof_cols.iter().map(|c| (c - y).norm_squared()).collect();
        let best = (0..mse.len()).min_by(|&i, &j| mse[i].total_cmp(&mse[j])).unwrap_or(0);
        w = (0..mse.len()).map(|i| if i == best { 1.0 } else { 0.0 }).collect();
    }
    Ok(StackFit {
        names,
        members,
        weights: w,
        dim: x.ncols(),
    })
}

fn fit_member(
    m: &StackMember,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    control: &StackControl,
    fold_of: &[usize],
) -> Result<(FittedModel, DVector<f64>)> {
    let n = x.nrows();
    let full = m.fit(x, y, &control.types, control.seed)?;
    let mut oof = DVector::zeros(n);
    for f in 0..control.folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        let xt = x.select_rows(&train);
        let yt = y.select_rows(&train);
        let fit = m.fit(&xt, &yt, &control.types, control.seed.wrapping_add(f as u64 + 1))?;
        let p = fit.predict_mean(&x.select_rows(&test))?;
        for (k, &i) in test.iter().enumerate() {
            if !p[k].is_finite() {
                return Err(Error::NonFinite(format!("{} out-of-fold prediction", m.name())));
            }
            oof[i] = p[k];
        }
    }
    Ok((full, oof))
}

impl Surrogate for StackFit {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, x: &DMatrix<f64>) -> Result<Prediction> {
        check_cols(self.dim, x)?;
        let mut mean = DVector::zeros(x.nrows());
        for (m, &w) in self.members.iter().zip(&self.weights) {
            if w > 0.0 {
                mean += m.predict_mean(x)? * w;
            }
        }
        Ok(Prediction { mean, sd: None })
    }
}
