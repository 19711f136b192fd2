//! `latentforce` command-line interface.
//!
//! Exit codes: 0 on success, 1 for invalid input or configuration, 2 when
//! every layout restart diverged.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use latentforce::{Family, IntegratorConfig, PriorConfig};

#[derive(Debug, Parser)]
#[command(name = "latentforce", version, about = "Force-directed layouts as maximum likelihood latent space models")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true, env = "LATENTFORCE_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a layout to a network file.
    Layout(LayoutArgs),
    /// Sample a synthetic network together with its generating layout.
    #[command(subcommand)]
    Generate(GenerateCommand),
    /// Recovery experiments and layout comparisons.
    #[command(subcommand)]
    Validate(ValidateCommand),
    /// Evaluate the log-likelihood of a stored layout.
    Loglik(LoglikArgs),
    /// Draw a stored two-dimensional layout as SVG.
    Render(RenderArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

/// Where the observed network comes from and how to read it.
#[derive(Debug, Args)]
pub struct NetworkArgs {
    /// Edge list (`src<TAB>dst[<TAB>weight]`) or, for the cumulative model,
    /// `author<TAB>action<TAB>adopter` lines.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "unweighted")]
    pub model: Family,
    /// Treat ties as symmetric (one activity parameter per node).
    #[arg(long)]
    pub undirected: bool,
    /// Number of ordinal levels for the weighted model (default: largest
    /// weight + 1).
    #[arg(long)]
    pub levels: Option<u32>,
    /// Weighted model only: nodes with outgoing ties rate nodes with incoming
    /// ties; no other pairs enter the likelihood.
    #[arg(long)]
    pub bipartite: bool,
}

#[derive(Debug, Args)]
pub struct PriorArgs {
    #[arg(long, value_enum, default_value = "on")]
    pub prior: Toggle,
    #[arg(long, default_value_t = 10.0)]
    pub prior_sigma_alpha: f64,
    #[arg(long, default_value_t = 10.0)]
    pub prior_sigma_beta: f64,
    #[arg(long, default_value_t = 10.0)]
    pub prior_sigma_pos: f64,
}

impl PriorArgs {
    pub fn config(&self) -> PriorConfig {
        PriorConfig {
            enabled: self.prior == Toggle::On,
            sigma_alpha: self.prior_sigma_alpha,
            sigma_beta: self.prior_sigma_beta,
            sigma_pos: self.prior_sigma_pos,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulationArgs {
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Independent random starts; the most likely result is kept.
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0.05)]
    pub dt: f64,
    /// Fraction of velocity kept per step.
    #[arg(long, default_value_t = 0.9)]
    pub damping: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Inertia of alpha, beta and cut points relative to positions.
    #[arg(long, default_value_t = 1.0)]
    pub param_mass: f64,
    /// Extra inertia per observed tie acting on a coordinate (0 = unit masses).
    #[arg(long, default_value_t = 0.01)]
    pub inertia_per_tie: f64,
    /// Run single-threaded. Output is identical either way; this only rules
    /// out scheduling differences when auditing runs.
    #[arg(long)]
    pub deterministic: bool,
}

impl SimulationArgs {
    pub fn config(&self) -> IntegratorConfig {
        IntegratorConfig {
            dt: self.dt,
            damping: self.damping,
            max_iters: self.max_iters,
            tol: self.tol,
            param_mass: self.param_mass,
            inertia_per_tie: self.inertia_per_tie,
            seed: self.seed,
            restarts: self.restarts,
            dim: self.dim,
            freeze_parameters: false,
        }
    }
}

#[derive(Debug, Args)]
pub struct LayoutArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    #[command(flatten)]
    pub simulation: SimulationArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Layout file to write (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Also draw the best layout as SVG (two dimensions only).
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// `id,label` CSV used to colour the SVG.
    #[arg(long, requires = "svg")]
    pub metadata: Option<PathBuf>,
    /// Compare analytic forces with finite differences at the first start
    /// before simulating; aborts if they disagree.
    #[arg(long)]
    pub check_gradients: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SampleModel {
    Unweighted,
    Cumulative,
    Weighted,
}

/// Family-specific generator settings.
#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long, value_enum, default_value = "unweighted")]
    pub model: SampleModel,
    /// Cumulative model: actions authored by every node.
    #[arg(long, default_value_t = 3)]
    pub actions_per_author: usize,
    /// Cumulative model: popularity of every action.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub action_beta: f64,
    /// Weighted model: strictly decreasing cut points, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,-1", allow_negative_numbers = true)]
    pub cuts: Vec<f64>,
    /// Network file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Generating layout to write (JSON, with block or cluster labels).
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum GenerateCommand {
    /// Two-block stochastic block model with coincident block positions.
    Sbm {
        #[arg(long, default_value_t = 100)]
        n1: usize,
        #[arg(long, default_value_t = 100)]
        n2: usize,
        #[arg(long, default_value_t = 0.5)]
        pin: f64,
        #[arg(long, default_value_t = 0.2)]
        pout: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        sample: SampleArgs,
    },
    /// Gaussian clusters spaced along the first axis.
    Gaussian {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        clusters: usize,
        #[arg(long, default_value_t = 1.0 / 12.0)]
        sigma: f64,
        #[arg(long, default_value_t = 5.0 / 6.0)]
        sep: f64,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        sample: SampleArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum ValidateCommand {
    /// Generate SBM networks for several p_out values, fit them and compare
    /// the block distance with its analytic value.
    SbmSweep {
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4")]
        pouts: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long, default_value_t = 0.5)]
        pin: f64,
        #[arg(long, default_value_t = 100)]
        n1: usize,
        #[arg(long, default_value_t = 100)]
        n2: usize,
        /// Mantel permutations per run.
        #[arg(long, default_value_t = 99)]
        permutations: usize,
        #[command(flatten)]
        simulation: SimulationArgs,
        /// Fit with the prior (off by default: the comparison is about the MLE).
        #[arg(long, value_enum, default_value = "off")]
        prior: Toggle,
        /// Also write every run's recovery report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Mantel test between the node distances of two layout files.
    Mantel {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        layout: PathBuf,
        #[arg(long, default_value_t = 999)]
        permutations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct LoglikArgs {
    /// Network file the layout was fitted to.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub layout: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub layout: PathBuf,
    /// Network file to draw edges from (optional).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    #[arg(long)]
    pub svg: PathBuf,
    #[arg(long, default_value_t = 1000.0)]
    pub width: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub height: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
