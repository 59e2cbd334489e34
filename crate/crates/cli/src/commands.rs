use crate::bundle::{self, x_header, RunMeta};
use crate::config::{Resolved, RunConfig};
use crate::error::{CliError, CliResult};
use nalgebra::DMatrix;
use spot_core::design::{make_lhd, make_uniform, DesignControl, DesignKind};
use spot_core::objectives::Objective;
use spot_core::rsm::{fit_rsm, RsmControl};
use spot_core::spot::{spot, spot_loop, SpotResult};
use spot_core::surrogates::Surrogate;
use spot_core::ParamSpace;
use std::io::Write;
use std::path::Path;

/// Settings shared by the commands that read a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub fun_evals: Option<usize>,
}

impl Overrides {
    fn apply(&self, config: &mut RunConfig) {
        if let Some(s) = self.seed {
            config.seed_spot = Some(s);
        }
        if let Some(n) = self.fun_evals {
            config.fun_evals = Some(n);
        }
    }
}

fn output(out: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Box::new(std::fs::File::create(p)?)
        }
        None => Box::new(std::io::stdout().lock()),
    })
}

fn space(r: &Resolved) -> CliResult<ParamSpace> {
    Ok(ParamSpace::new(r.lower.clone(), r.upper.clone(), r.types.clone())?)
}

/// Writes the initial design described by the config as CSV.
pub fn design(config: &RunConfig, ov: &Overrides, out: Option<&Path>) -> CliResult<()> {
    let mut config = config.clone();
    ov.apply(&mut config);
    let r = config.resolve("sphere")?;
    let control = DesignControl {
        seed: r.spot.seed_spot,
        ..r.spot.design_control.clone()
    };
    let space = space(&r)?;
    let x = match r.spot.design {
        DesignKind::Lhd => make_lhd(None, &space, &control)?,
        DesignKind::UniformRandom => make_uniform(None, &space, &control)?,
    };
    bundle::write_table(output(out)?, &x_header(space.dim()), &x)
}

fn summary<W: Write>(mut w: W, result: &SpotResult) -> CliResult<()> {
    let xs: Vec<String> = result.xbest.iter().map(|v| bundle::fmt_num(*v)).collect();
    writeln!(w, "xbest: {}", xs.join(" "))?;
    writeln!(w, "ybest: {}", bundle::fmt_num(result.ybest))?;
    writeln!(w, "count: {}", result.count)?;
    writeln!(w, "msg: {}", result.msg)?;
    Ok(())
}

fn warn(result: &SpotResult) {
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
}

fn run_new(config: &RunConfig, default_objective: &str, dir: &Path) -> CliResult<SpotResult> {
    let r = config.resolve(default_objective)?;
    let result = spot(None, &r.objective, &r.lower, &r.upper, &r.spot)?;
    warn(&result);
    bundle::save(dir, &result.archive, &RunMeta::from_result(config, &result, r.spot.seed_spot, None))?;
    summary(std::io::stdout().lock(), &result)?;
    Ok(result)
}

/// Runs a tuning campaign; the objective defaults to the SANN scenario.
pub fn tune(config: &RunConfig, ov: &Overrides, dir: &Path) -> CliResult<SpotResult> {
    let mut config = config.clone();
    ov.apply(&mut config);
    run_new(&config, "sannSphere", dir)
}

/// Runs direct optimization of a deterministic named objective.
pub fn optimize(config: &RunConfig, ov: &Overrides, dir: &Path) -> CliResult<SpotResult> {
    let mut config = config.clone();
    ov.apply(&mut config);
    let r = config.resolve("sphere")?;
    if r.objective.is_stochastic() || r.spot.noise {
        return Err(CliError::Config(format!(
            "optimize expects a deterministic objective without noise; use tune for {}",
            r.objective.name()
        )));
    }
    run_new(&config, "sphere", dir)
}

/// Resumes the run stored in `dir` up to `fun_evals` total evaluations and
/// writes the result to `out` (default: back into `dir`).
pub fn resume(dir: &Path, ov: &Overrides, out: Option<&Path>) -> CliResult<SpotResult> {
    let (archive, meta) = bundle::load(dir)?;
    let mut config = meta.config.clone();
    ov.apply(&mut config);
    let r = config.resolve("sannSphere")?;
    let result = spot_loop(archive, &r.objective, &r.lower, &r.upper, &r.spot)?;
    warn(&result);
    let target = out.unwrap_or(dir);
    let meta = RunMeta::from_result(&config, &result, r.spot.seed_spot, Some(meta.run.created));
    bundle::save(target, &result.archive, &meta)?;
    summary(std::io::stdout().lock(), &result)?;
    Ok(result)
}

/// Fits a response surface to a bundle's archive and writes its descent path
/// (original units) as CSV.
pub fn rsm_path(dir: &Path, canonical: bool, out: Option<&Path>) -> CliResult<()> {
    let (archive, _) = bundle::load(dir)?;
    let (x, y) = archive.finite_rows();
    let fit = fit_rsm(&x, &y, &RsmControl { canonical, ..RsmControl::default() })?;
    let path = fit.descent_path()?;
    let table = DMatrix::from_fn(path.x.nrows(), x.ncols() + 1, |r, c| {
        if c < x.ncols() {
            path.x[(r, c)]
        } else {
            path.y[r]
        }
    });
    let mut header = x_header(x.ncols());
    header.push("y".into());
    bundle::write_table(output(out)?, &header, &table)
}

/// What a surface grid evaluates.
pub enum SurfaceSource {
    /// Named objective from a config file.
    Function(Box<RunConfig>),
    /// Model from a bundle's config, fitted to its archive.
    Bundle(std::path::PathBuf),
}

pub struct SurfaceSpec {
    pub grid: usize,
    /// Zero-based dimensions spanning the grid.
    pub dims: (usize, usize),
    /// Values of the remaining dimensions; default is the box center.
    pub at: Option<Vec<f64>>,
}

/// Evaluates a g x g grid spanning two dimensions, bounds inclusive, and
/// writes `x<i>,x<j>,y` rows with the first dimension varying slowest.
pub fn surface(source: &SurfaceSource, spec: &SurfaceSpec, out: Option<&Path>) -> CliResult<()> {
    let (config, archive) = match source {
        SurfaceSource::Function(c) => ((**c).clone(), None),
        SurfaceSource::Bundle(dir) => {
            let (a, m) = bundle::load(dir)?;
            (m.config, Some(a))
        }
    };
    let r = config.resolve("sphere")?;
    let d = r.lower.len();
    let (i, j) = spec.dims;
    if i >= d || j >= d || i == j {
        return Err(CliError::Config(format!(
            "grid dimensions {},{} must be distinct and within 1..={d}",
            i + 1,
            j + 1
        )));
    }
    if spec.grid < 2 {
        return Err(CliError::Config("grid size must be at least 2".into()));
    }
    let base = match &spec.at {
        Some(v) if v.len() != d => {
            return Err(CliError::Config(format!("--at needs {d} values, got {}", v.len())));
        }
        Some(v) => v.clone(),
        None => (0..d).map(|k| 0.5 * (r.lower[k] + r.upper[k])).collect(),
    };
    let g = spec.grid;
    let level = |k: usize, s: usize| r.lower[k] + (r.upper[k] - r.lower[k]) * s as f64 / (g - 1) as f64;
    let pts = DMatrix::from_fn(g * g, d, |row, c| {
        if c == i {
            level(i, row / g)
        } else if c == j {
            level(j, row % g)
        } else {
            base[c]
        }
    });
    let y = match archive {
        None => r.objective.evaluate(&pts, None)?,
        Some(a) => {
            let (x, y) = a.finite_rows();
            let seed = r.spot.seed_spot;
            r.spot.model.fit(&x, &y, &r.types, seed)?.predict_mean(&pts)?
        }
    };
    let table = DMatrix::from_fn(g * g, 3, |row, c| match c {
        0 => pts[(row, i)],
        1 => pts[(row, j)],
        _ => y[row],
    });
    let header = vec![format!("x{}", i + 1), format!("x{}", j + 1), "y".into()];
    bundle::write_table(output(out)?, &header, &table)
}
