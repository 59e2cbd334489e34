//! Search-space description shared by designs, optimizers and the engine.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::fmt;
use std::str::FromStr;

/// Data type of one search-space dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum VarType {
    #[default]
    Numeric,
    Integer,
    /// Categorical; levels are the integers in `[lower, upper]`.
    Factor,
}

impl VarType {
    pub fn is_discrete(self) -> bool {
        !matches!(self, VarType::Numeric)
    }
}

impl fmt::Display for VarType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VarType::Numeric => "numeric",
            VarType::Integer => "integer",
            VarType::Factor => "factor",
        })
    }
}

impl FromStr for VarType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "numeric" => Ok(VarType::Numeric),
            "integer" => Ok(VarType::Integer),
            "factor" => Ok(VarType::Factor),
            other => Err(Error::InvalidControl(format!("unknown variable type '{other}'"))),
        }
    }
}

/// Box-shaped region of interest with a type tag per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
    types: Vec<VarType>,
}

impl ParamSpace {
    /// Creates a space. Bounds of integer and factor dimensions are snapped
    /// inwards to integers.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, types: Vec<VarType>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidBounds("at least one dimension is required".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::InvalidBounds(format!(
                "lower has {} entries but upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        if types.len() != lower.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: types.len(),
            });
        }
        let mut lower = lower;
        let mut upper = upper;
        for i in 0..lower.len() {
            if !lower[i].is_finite() || !upper[i].is_finite() {
                return Err(Error::InvalidBounds(format!("dimension {} has a non-finite bound", i + 1)));
            }
            if lower[i] > upper[i] {
                return Err(Error::InvalidBounds(format!(
                    "dimension {}: lower {} > upper {}",
                    i + 1,
                    lower[i],
                    upper[i]
                )));
            }
            if types[i].is_discrete() {
                lower[i] = lower[i].ceil();
                upper[i] = upper[i].floor();
                if lower[i] > upper[i] {
                    return Err(Error::InvalidBounds(format!(
                        "dimension {} contains no integer level",
                        i + 1
                    )));
                }
            }
        }
        Ok(Self { lower, upper, types })
    }

    /// All-numeric space.
    pub fn numeric(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let d = lower.len();
        Self::new(lower, upper, vec![VarType::Numeric; d])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn types(&self) -> &[VarType] {
        &self.types
    }

    /// Rounds discrete coordinates and clamps every coordinate into the box.
    pub fn snap(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            if self.types[i].is_discrete() {
                *v = v.round();
            }
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    pub fn snap_rows(&self, x: &mut DMatrix<f64>) {
        let mut row = vec![0.0; self.dim()];
        for r in 0..x.nrows() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = x[(r, c)];
            }
            self.snap(&mut row);
            for (c, v) in row.iter().enumerate() {
                x[(r, c)] = *v;
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().enumerate().all(|(i, &v)| {
                v >= self.lower[i]
                    && v <= self.upper[i]
                    && (!self.types[i].is_discrete() || v.fract() == 0.0)
            })
    }

    /// Sampling interval for one dimension. Discrete dimensions are widened by
    /// just under half a unit so that rounding gives every level equal mass.
    pub(crate) fn sampling_interval(&self, i: usize) -> (f64, f64) {
        if self.types[i].is_discrete() {
            let pad = 0.5 - 1e-9;
            (self.lower[i] - pad, self.upper[i] + pad)
        } else {
            (self.lower[i], self.upper[i])
        }
    }
}
