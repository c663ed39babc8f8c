mod commands;
mod config;
mod error;
mod output;

use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use error::{CliError, CliResult};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "beamlab", version, about = "Gaussian beam quasimodes, admissible geodesic pairs and FBI diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Clone, Debug)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Surface name, overriding `surface.name`.
    #[arg(long)]
    pub surface: Option<String>,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for randomized point selection, overriding `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Base point and covector of a geodesic.
#[derive(Args, Clone, Debug)]
pub struct Start {
    /// Base point `x1,x2`.
    #[arg(long, allow_hyphen_values = true)]
    pub point: Option<String>,
    /// Covector `c1,c2` (normalized to unit length).
    #[arg(long, allow_hyphen_values = true)]
    pub xi: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Trace one geodesic and write its samples.
    Trace {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        start: Start,
    },
    /// X-ray transform of a built-in function along one or many geodesics.
    Xray {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        start: Start,
        /// `const:c`, `gauss:cx,cy,w` or `cos_x2:k`.
        #[arg(long)]
        field: Option<String>,
        /// Trace this many random geodesics instead of one.
        #[arg(long)]
        random: Option<usize>,
    },
    /// Build the admissible pair generating a covector and verify its neighborhood family.
    Admissible {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        start: Start,
        /// First covector of the pair; required off the flat cylinder.
        #[arg(long, allow_hyphen_values = true)]
        zeta1: Option<String>,
        #[arg(long)]
        grid_radius: Option<f64>,
        #[arg(long)]
        grid_n: Option<usize>,
    },
    /// Build one beam and dump its phase or amplitude data.
    Beam {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        start: Start,
        /// JSON file receiving M(t) and the phase coefficient tables.
        #[arg(long)]
        dump_phase: Option<PathBuf>,
        /// CSV file receiving the per-term sup norms and the fitted symbol constant.
        #[arg(long)]
        dump_amp: Option<PathBuf>,
    },
    /// Residual and norm of the quasimode over an h sweep.
    Residual {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        start: Start,
        /// `exact_flat` or `jets`, overriding `beam.mode`.
        #[arg(long)]
        mode: Option<String>,
        /// Comma-separated, strictly decreasing h values.
        #[arg(long)]
        h: Option<String>,
    },
    /// FBI decay scan of sampled data over a phase-space grid.
    Fbi {
        #[command(flatten)]
        common: Common,
        /// CSV with header `x1,x2,value` or `x1,x2,re,im`.
        #[arg(long)]
        input: PathBuf,
        /// `x1,x2,xi1,xi2[,radius,n]`.
        #[arg(long, allow_hyphen_values = true)]
        alpha_grid: String,
        #[arg(long)]
        h: Option<String>,
        /// FBI cutoff `radius,plateau`, overriding the config.
        #[arg(long)]
        cutoff: Option<String>,
        /// Interpolation degree of the sampled input.
        #[arg(long, default_value_t = 5)]
        degree: usize,
    },
    /// Linearized Calderón experiment from a config file.
    Calderon {
        #[command(flatten)]
        common: Common,
    },
}

/// Resolved configuration plus output location.
pub struct Context {
    pub cfg: RunConfig,
    pub out_dir: PathBuf,
    pub prefix: String,
    pub config_dir: PathBuf,
}

impl Context {
    fn new(common: &Common) -> CliResult<Self> {
        let mut cfg = config::load(common.config.as_deref())?;
        if let Some(s) = &common.surface {
            cfg.surface.name = Some(s.clone());
        }
        if let Some(s) = common.seed {
            cfg.seed = Some(s);
        }
        let out_dir = common.out.clone().or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("."));
        let prefix = cfg.output.prefix.clone().unwrap_or_default();
        let config_dir = common
            .config
            .as_deref()
            .and_then(|p| p.parent())
            .map(|p| p.to_path_buf())
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Self { cfg, out_dir, prefix, config_dir })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(format!("{}{}", self.prefix, name))
    }

    pub fn seed(&self) -> u64 {
        self.cfg.seed.unwrap_or(0)
    }
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("BEAMLAB_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Validation(format!("BEAMLAB_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Numerical(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<String> {
    init_threads()?;
    match cli.command {
        Command::Trace { common, start } => commands::geometry::trace(&Context::new(&common)?, &start),
        Command::Xray { common, start, field, random } => {
            commands::geometry::xray(&Context::new(&common)?, &start, field.as_deref(), random)
        }
        Command::Admissible { common, start, zeta1, grid_radius, grid_n } => {
            commands::geometry::admissible(&Context::new(&common)?, &start, zeta1.as_deref(), grid_radius, grid_n)
        }
        Command::Beam { common, start, dump_phase, dump_amp } => {
            commands::beam::beam(&Context::new(&common)?, &start, dump_phase.as_deref(), dump_amp.as_deref())
        }
        Command::Residual { common, start, mode, h } => {
            let mut ctx = Context::new(&common)?;
            if mode.is_some() {
                ctx.cfg.beam.mode = mode;
            }
            commands::beam::residual(&ctx, &start, h.as_deref())
        }
        Command::Fbi { common, input, alpha_grid, h, cutoff, degree } => {
            let mut ctx = Context::new(&common)?;
            if let Some(c) = cutoff {
                let [r, p] = config::pair("--cutoff", &c)?;
                ctx.cfg.experiment.cutoff_radius = Some(r);
                ctx.cfg.experiment.cutoff_plateau = Some(p);
            }
            commands::fbi::fbi(&ctx, &input, &alpha_grid, h.as_deref(), degree)
        }
        Command::Calderon { common } => {
            if common.config.is_none() {
                return Err(CliError::Validation("calderon requires --config".into()));
            }
            commands::calderon::calderon(&Context::new(&common)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("beamlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
