//! Surrogate models behind a common fit/predict contract.

mod forest;
mod kriging;
mod nnls;
mod stack;

pub use forest::{fit_forest, ForestControl, ForestFit};
pub use kriging::{fit_kriging, kernel_value, KrigingControl, KrigingFit, ThetaSearch};
pub use nnls::nnls;
pub use stack::{fit_stack, StackControl, StackFit, StackMember};

use crate::error::{Error, Result};
use crate::rsm::{fit_rsm, RsmControl, RsmFit};
use crate::space::VarType;
use nalgebra::{DMatrix, DVector};

/// Predicted mean and, when the model provides one, a standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: DVector<f64>,
    pub sd: Option<DVector<f64>>,
}

pub trait Surrogate: Send + Sync {
    /// Number of input columns the model was trained on.
    fn dim(&self) -> usize;

    fn predict(&self, x: &DMatrix<f64>) -> Result<Prediction>;

    fn predict_mean(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.predict(x).map(|p| p.mean)
    }
}

pub(crate) fn check_cols(expected: usize, x: &DMatrix<f64>) -> Result<()> {
    if x.ncols() != expected {
        return Err(Error::DimensionMismatch { expected, got: x.ncols() });
    }
    Ok(())
}

pub(crate) fn check_training(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
    }
    if x.nrows() == 0 {
        return Err(Error::InsufficientData("no training rows".into()));
    }
    if x.ncols() == 0 {
        return Err(Error::InsufficientData("no input columns".into()));
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("training target {v}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training input".into()));
    }
    Ok(())
}

/// Model family plus its controls, selectable by name.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Kriging(KrigingControl),
    Forest(ForestControl),
    Rsm(RsmControl),
    Stack(StackControl),
}

impl Default for ModelKind {
    fn default() -> Self {
        ModelKind::Kriging(KrigingControl::default())
    }
}

impl ModelKind {
    /// Fits the model. `types` tags factor columns for models that use them;
    /// `seed` overrides the control's own seed so repeated fits in one run differ.
    pub fn fit(&self, x: &DMatrix<f64>, y: &DVector<f64>, types: &[VarType], seed: u64) -> Result<FittedModel> {
        Ok(match self {
            ModelKind::Kriging(c) => {
                let c = KrigingControl {
                    types: Some(types.to_vec()),
                    seed,
                    ..c.clone()
                };
                FittedModel::Kriging(fit_kriging(x, y, &c)?)
            }
            ModelKind::Forest(c) => FittedModel::Forest(fit_forest(x, y, &ForestControl { seed, ..c.clone() })?),
            ModelKind::Rsm(c) => FittedModel::Rsm(fit_rsm(x, y, c)?),
            ModelKind::Stack(c) => {
                let c = StackControl {
                    types: Some(types.to_vec()),
                    seed,
                    ..c.clone()
                };
                FittedModel::Stack(fit_stack(x, y, &c)?)
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Kriging(_) => "kriging",
            ModelKind::Forest(_) => "forest",
            ModelKind::Rsm(_) => "rsm",
            ModelKind::Stack(_) => "stack",
        }
    }
}

#[derive(Debug, Clone)]
pub enum FittedModel {
    Kriging(KrigingFit),
    Forest(ForestFit),
    Rsm(RsmFit),
    Stack(StackFit),
}

impl Surrogate for FittedModel {
    fn dim(&self) -> usize {
        match self {
            FittedModel::Kriging(m) => m.dim(),
            FittedModel::Forest(m) => m.dim(),
            FittedModel::Rsm(m) => m.dim(),
            FittedModel::Stack(m) => m.dim(),
        }
    }

    fn predict(&self, x: &DMatrix<f64>) -> Result<Prediction> {
        match self {
            FittedModel::Kriging(m) => m.predict(x),
            FittedModel::Forest(m) => m.predict(x),
            FittedModel::Rsm(m) => m.predict(x),
            FittedModel::Stack(m) => m.predict(x),
        }
    }
}
