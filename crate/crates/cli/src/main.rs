use clap::{Args, Parser, Subcommand};
use spot_cli::commands::{self, Overrides, SurfaceSource, SurfaceSpec};
use spot_cli::config::RunConfig;
use spot_cli::{CliError, CliResult};
use std::path::PathBuf;
use std::process::ExitCode;

/// Sequential parameter optimization: designs, tuning runs, continuation,
/// response-surface paths and surface grids.
#[derive(Parser)]
#[command(name = "spot", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides seedSPOT.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides funEvals.
    #[arg(long = "fun-evals")]
    fun_evals: Option<usize>,
}

impl Common {
    fn load(&self) -> CliResult<(RunConfig, Overrides)> {
        let ov = Overrides {
            seed: self.seed,
            fun_evals: self.fun_evals,
        };
        Ok((RunConfig::load(&self.config)?, ov))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured initial design as CSV.
    Design {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a tuning campaign and write a run bundle.
    Tune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Optimize a deterministic objective and write a run bundle.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Resume a bundle up to a larger evaluation budget.
    Continue {
        #[arg(long)]
        bundle: PathBuf,
        /// New total budget, archived rows included.
        #[arg(long = "fun-evals")]
        fun_evals: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the resumed bundle here instead of updating it in place.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a response surface to a bundle's archive and print its descent path.
    RsmPath {
        #[arg(long)]
        bundle: PathBuf,
        /// Follow the canonical axis from a saddle point.
        #[arg(long)]
        canonical: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a named objective (--config) or a bundle's model (--bundle) on a grid.
    Surface {
        #[arg(long, conflicts_with = "bundle", required_unless_present = "bundle")]
        config: Option<PathBuf>,
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Points per axis.
        #[arg(long, default_value_t = 20)]
        grid: usize,
        /// Two 1-based dimensions, e.g. 1,2.
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2])]
        dims: Vec<usize>,
        /// Values for every dimension; those off the grid are held fixed.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        at: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Design { common, out } => {
            let (c, ov) = common.load()?;
            commands::design(&c, &ov, out.as_deref())
        }
        Command::Tune { common, bundle } => {
            let (c, ov) = common.load()?;
            commands::tune(&c, &ov, &bundle).map(drop)
        }
        Command::Optimize { common, bundle } => {
            let (c, ov) = common.load()?;
            commands::optimize(&c, &ov, &bundle).map(drop)
        }
        Command::Continue {
            bundle,
            fun_evals,
            seed,
            out,
        } => {
            let ov = Overrides {
                seed,
                fun_evals: Some(fun_evals),
            };
            commands::resume(&bundle, &ov, out.as_deref()).map(drop)
        }
        Command::RsmPath { bundle, canonical, out } => commands::rsm_path(&bundle, canonical, out.as_deref()),
        Command::Surface {
            config,
            bundle,
            grid,
            dims,
            at,
            out,
        } => {
            let source = match (config, bundle) {
                (Some(c), None) => SurfaceSource::Function(Box::new(RunConfig::load(&c)?)),
                (None, Some(b)) => SurfaceSource::Bundle(b),
                _ => return Err(CliError::Config("give exactly one of --config and --bundle".into())),
            };
            if dims.len() != 2 || dims.contains(&0) {
                return Err(CliError::Config("--dims takes two 1-based dimensions, e.g. 1,2".into()));
            }
            let spec = SurfaceSpec {
                grid,
                dims: (dims[0] - 1, dims[1] - 1),
                at,
            };
            commands::surface(&source, &spec, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
