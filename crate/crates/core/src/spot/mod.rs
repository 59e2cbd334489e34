//! The sequential optimization loop: initial design, surrogate fit,
//! surrogate search, duplicate handling, replicates and OCBA.

mod archive;
mod ocba;

pub use archive::{EvalArchive, NoiseState};
pub use ocba::{approx_pcs, ocba_allocate, ocba_targets, ConfigStats, EXACT_BUDGET_LIMIT};

use crate::design::{uniform_with_rng, DesignControl, DesignKind};
use crate::error::{Error, Result};
use crate::objectives::Objective;
use crate::optim::OptimizerKind;
use crate::space::{ParamSpace, VarType};
use crate::surrogates::{FittedModel, ModelKind, Surrogate};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Upper limit on uniform redraws when replacing a duplicate candidate.
pub const DUPLICATE_RETRIES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DuplicatePolicy {
    #[default]
    Explore,
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpotConfig {
    pub fun_evals: usize,
    /// Per-dimension tags; `None` means all numeric.
    pub types: Option<Vec<VarType>>,
    pub design: DesignKind,
    pub design_control: DesignControl,
    pub model: ModelKind,
    pub optimizer: OptimizerKind,
    pub noise: bool,
    pub ocba: bool,
    pub ocba_budget: usize,
    pub replicates: usize,
    pub seed_fun: Option<u64>,
    pub seed_spot: u64,
    pub duplicate: DuplicatePolicy,
    /// Record the best-so-far trace in run metadata.
    pub plots: bool,
}

impl Default for SpotConfig {
    fn default() -> Self {
        Self {
            fun_evals: 20,
            types: None,
            design: DesignKind::Lhd,
            design_control: DesignControl::default(),
            model: ModelKind::default(),
            optimizer: OptimizerKind::default(),
            noise: false,
            ocba: false,
            ocba_budget: 3,
            replicates: 1,
            seed_fun: None,
            seed_spot: 1,
            duplicate: DuplicatePolicy::Explore,
            plots: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpotResult {
    pub xbest: Vec<f64>,
    pub ybest: f64,
    pub archive: EvalArchive,
    pub count: usize,
    pub msg: String,
    /// Surrogate fitted in the last completed iteration.
    pub model_fit: Option<FittedModel>,
    pub warnings: Vec<String>,
}

impl SpotResult {
    pub fn x(&self) -> DMatrix<f64> {
        self.archive.x_matrix()
    }

    pub fn y(&self) -> DVector<f64> {
        self.archive.y_vector()
    }
}

/// Replaces a duplicate candidate under `Explore`, or returns `None` under
/// `Stop`. Non-duplicates are returned unchanged.
pub fn apply_duplicate_policy<R: Rng + ?Sized>(
    candidate: Vec<f64>,
    archive: &EvalArchive,
    policy: DuplicatePolicy,
    space: &ParamSpace,
    rng: &mut R,
) -> Result<Option<Vec<f64>>> {
    if !archive.contains(&candidate) {
        return Ok(Some(candidate));
    }
    match policy {
        DuplicatePolicy::Stop => Ok(None),
        DuplicatePolicy::Explore => {
            let one = DesignControl {
                size: 1,
                ..Default::default()
            };
            for _ in 0..DUPLICATE_RETRIES {
                let draw = uniform_with_rng(None, space, &one, rng)?;
                let p: Vec<f64> = draw.row(0).iter().copied().collect();
                if !archive.contains(&p) {
                    return Ok(Some(p));
                }
            }
            Err(Error::DuplicatesExhausted(DUPLICATE_RETRIES))
        }
    }
}

struct Engine<'a> {
    fun: &'a dyn Objective,
    space: ParamSpace,
    config: &'a SpotConfig,
    rng: ChaCha8Rng,
    noise_state: NoiseState,
    archive: EvalArchive,
    warnings: Vec<String>,
}

impl Engine<'_> {
    fn seeds_for(&mut self, m: usize) -> Result<Option<Vec<u64>>> {
        if !self.config.noise {
            return Ok(None);
        }
        let seeds = if self.config.seed_fun.is_some() {
            (0..m).map(|_| self.noise_state.next_seed()).collect::<Result<Vec<_>>>()?
        } else {
            (0..m).map(|_| u64::from(self.rng.random::<u32>())).collect()
        };
        Ok(Some(seeds))
    }

    fn evaluate(&mut self, rows: &[Vec<f64>]) -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        let d = self.space.dim();
        let x = DMatrix::from_fn(rows.len(), d, |r, c| rows[r][c]);
        let seeds = self.seeds_for(rows.len())?;
        let y = self.fun.evaluate(&x, seeds.as_deref())?;
        if y.len() != rows.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: y.len(),
            });
        }
        for (r, row) in rows.iter().enumerate() {
            self.archive.push(row.clone(), y[r], seeds.as_ref().map(|s| s[r]));
        }
        Ok(())
    }

    fn remaining(&self) -> usize {
        self.config.fun_evals.saturating_sub(self.archive.len())
    }

    fn run_loop(&mut self) -> Result<(String, Option<FittedModel>)> {
        let mut model_fit = None;
        let lower = self.space.lower().to_vec();
        let upper = self.space.upper().to_vec();
        while self.remaining() > 0 {
            let (xf, yf) = self.archive.finite_rows();
            if xf.nrows() == 0 {
                return Err(Error::InsufficientData("no finite objective values to fit".into()));
            }
            let model_seed = self.rng.random::<u64>();
            let fit = self.config.model.fit(&xf, &yf, self.space.types(), model_seed)?;
            let surrogate = |m: &DMatrix<f64>| {
                fit.predict_mean(m)
                    .unwrap_or_else(|_| DVector::from_element(m.nrows(), f64::INFINITY))
            };
            let start = match &self.config.optimizer {
                OptimizerKind::LocalBounded(_) => self.archive.best_index().map(|i| self.archive.points()[i].clone()),
                OptimizerKind::Lhd(_) => None,
            };
            let opt_seed = self.rng.random::<u64>();
            let res = self
                .config
                .optimizer
                .minimize(start.as_deref(), &surrogate, &lower, &upper, opt_seed)?;
            model_fit = Some(fit);
            let mut cand = res.xbest;
            self.space.snap(&mut cand);
            if !self.config.noise {
                match apply_duplicate_policy(cand, &self.archive, self.config.duplicate, &self.space, &mut self.rng)? {
                    Some(c) => cand = c,
                    None => {
                        return Ok((
                            "duplicate candidate proposed; run stopped (duplicate = STOP)".into(),
                            model_fit,
                        ))
                    }
                }
            }
            let k = self.config.replicates.min(self.remaining());
            self.evaluate(&vec![cand; k])?;
            if self.config.ocba && self.config.noise {
                self.ocba_step()?;
            }
        }
        Ok(("budget exhausted".into(), model_fit))
    }

    fn ocba_step(&mut self) -> Result<()> {
        let budget = self.config.ocba_budget.min(self.remaining());
        if budget == 0 {
            return Ok(());
        }
        let mut configs = Vec::new();
        let mut stats = Vec::new();
        for (x, rows) in self.archive.groups() {
            let ys: Vec<f64> = rows.iter().map(|&r| self.archive.values()[r]).collect();
            if ys.len() < 2 || ys.iter().any(|v| !v.is_finite()) {
                continue;
            }
            let n = ys.len() as f64;
            let mean = ys.iter().sum::<f64>() / n;
            let variance = ys.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            configs.push(x);
            stats.push(ConfigStats {
                mean,
                variance,
                count: ys.len(),
            });
        }
        if stats.len() < 2 {
            return Ok(());
        }
        let alloc = ocba_allocate(&stats, budget)?;
        let mut rows = Vec::new();
        for (x, &a) in configs.iter().zip(&alloc) {
            rows.extend(std::iter::repeat_n(x.clone(), a));
        }
        self.evaluate(&rows)
    }

    fn finish(self, msg: String, model_fit: Option<FittedModel>) -> SpotResult {
        let (xbest, ybest) = match self.archive.best_index() {
            Some(i) => (self.archive.points()[i].clone(), self.archive.values()[i]),
            None => (Vec::new(), f64::INFINITY),
        };
        SpotResult {
            xbest,
            ybest,
            count: self.archive.len(),
            archive: self.archive,
            msg,
            model_fit,
            warnings: self.warnings,
        }
    }
}

fn build_space(lower: &[f64], upper: &[f64], config: &SpotConfig) -> Result<ParamSpace> {
    let types = config.types.clone().unwrap_or_else(|| vec![VarType::Numeric; lower.len()]);
    ParamSpace::new(lower.to_vec(), upper.to_vec(), types)
}

fn validate(config: &SpotConfig, warnings: &mut Vec<String>) -> Result<()> {
    if config.fun_evals < 1 {
        return Err(Error::InvalidControl("funEvals must be at least 1".into()));
    }
    if config.replicates < 1 {
        return Err(Error::InvalidControl("replicates must be at least 1".into()));
    }
    if config.ocba && config.replicates < 2 {
        warnings.push("OCBA is enabled but replicates <= 1".into());
    }
    if config.ocba && config.design_control.replicates < 2 {
        warnings.push("OCBA is enabled but design replicates <= 1".into());
    }
    if config.ocba && !config.noise {
        warnings.push("OCBA is ignored because noise is off".into());
    }
    Ok(())
}

/// Runs a complete optimization: initial design, then model-based
/// iterations until `fun_evals` evaluations are spent.
pub fn spot(
    x: Option<&DMatrix<f64>>,
    fun: &dyn Objective,
    lower: &[f64],
    upper: &[f64],
    config: &SpotConfig,
) -> Result<SpotResult> {
    let space = build_space(lower, upper, config)?;
    let mut warnings = Vec::new();
    validate(config, &mut warnings)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed_spot);

    let mut points: Vec<Vec<f64>> = Vec::new();
    if let Some(start) = x {
        if start.ncols() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                got: start.ncols(),
            });
        }
        let mut s = start.clone();
        space.snap_rows(&mut s);
        points.extend((0..s.nrows()).map(|r| s.row(r).iter().copied().collect::<Vec<f64>>()));
    }
    let generated = {
        let dc = DesignControl {
            replicates: 1,
            ..config.design_control.clone()
        };
        config.design.generate(x, &space, &dc, &mut rng)?
    };
    points.extend((0..generated.nrows()).map(|r| generated.row(r).iter().copied().collect::<Vec<f64>>()));

    let reps = config.design_control.replicates.max(1);
    let required = points.len() * reps;
    if required > config.fun_evals {
        return Err(Error::InfeasibleBudget {
            fun_evals: config.fun_evals,
            required,
        });
    }
    let initial: Vec<Vec<f64>> = points
        .iter()
        .flat_map(|p| std::iter::repeat_n(p.clone(), reps))
        .collect();

    let mut engine = Engine {
        fun,
        space,
        config,
        rng,
        noise_state: NoiseState::new(config.seed_fun),
        archive: EvalArchive::new(),
        warnings,
    };
    engine.evaluate(&initial)?;
    let (msg, fit) = engine.run_loop()?;
    Ok(engine.finish(msg, fit))
}

/// Continues a run from an existing archive. `fun_evals` counts the rows
/// already present.
pub fn spot_loop(
    archive: EvalArchive,
    fun: &dyn Objective,
    lower: &[f64],
    upper: &[f64],
    config: &SpotConfig,
) -> Result<SpotResult> {
    let space = build_space(lower, upper, config)?;
    let mut warnings = Vec::new();
    validate(config, &mut warnings)?;
    let rows = archive.len();
    if rows == 0 {
        return Err(Error::InsufficientData("continuation needs at least one archived row".into()));
    }
    if archive.dim() != Some(space.dim()) {
        return Err(Error::DimensionMismatch {
            expected: space.dim(),
            got: archive.dim().unwrap_or(0),
        });
    }
    let next_seed = archive
        .last_seed()
        .map(|s| s.wrapping_add(1))
        .or_else(|| config.seed_fun.map(|s| s.wrapping_add(rows as u64)));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed_spot);
    rng.set_stream(rows as u64);
    let mut engine = Engine {
        fun,
        space,
        config,
        rng,
        noise_state: NoiseState::new(next_seed),
        archive,
        warnings,
    };
    if config.fun_evals <= rows {
        let msg = format!("funEvals ({}) does not exceed the {rows} archived rows; nothing to do", config.fun_evals);
        return Ok(engine.finish(msg, None));
    }
    let (msg, fit) = engine.run_loop()?;
    Ok(engine.finish(msg, fit))
}
