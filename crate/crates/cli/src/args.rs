use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::grid::{node_count, non_negative, positive, Grid, IntGrid, RandomSpec, Range};

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "lossgrid",
    version,
    about = "Transient resistive losses of droop and DAPI controlled microgrids"
)]
pub struct Cli {
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    #[serde(skip)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Squared H2 norms by closed form, modal Lyapunov and full Gramian.
    Analyze(AnalyzeArgs),
    /// Loss-minimising communication gain gamma.
    Tune(TuneArgs),
    /// DAPI norm or loss reduction along a parameter grid.
    Sweep(SweepArgs),
    /// Stochastic time-domain simulation.
    Simulate(SimulateArgs),
    /// Norms against network size for line and complete graphs.
    Scaling(ScalingArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Analyze(_) => "analyze",
            Command::Tune(_) => "tune",
            Command::Sweep(_) => "sweep",
            Command::Simulate(_) => "simulate",
            Command::Scaling(_) => "scaling",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Line graph on N nodes.
    #[arg(long, value_name = "N", value_parser = node_count)]
    pub line: Option<usize>,
    /// Complete graph on N nodes.
    #[arg(long, value_name = "N", value_parser = node_count)]
    pub complete: Option<usize>,
    /// Connected Erdős–Rényi graph with N nodes and edge probability p.
    #[arg(long, value_name = "N,p")]
    pub random: Option<RandomSpec>,
    /// Edge-list file.
    #[arg(long, value_name = "PATH")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NetworkArgs {
    #[command(flatten)]
    pub source: Source,
    /// Uniform line susceptance for generated networks.
    #[arg(long, value_parser = positive)]
    pub b: Option<f64>,
    /// Draw generated susceptances uniformly from lo,hi instead.
    #[arg(long, value_name = "LO,HI", conflicts_with = "b")]
    pub b_range: Option<Range>,
    /// Conductance-to-susceptance ratio (overrides the file header).
    #[arg(long, value_parser = non_negative)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ControlArgs {
    /// Droop coefficient.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub m: f64,
    /// Secondary integrator gain.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub k: f64,
    /// Frequency measurement time constant.
    #[arg(long, default_value_t = 1.0, value_parser = non_negative)]
    pub tau: f64,
    /// Communication gain.
    #[arg(long, default_value_t = 1.0, value_parser = non_negative)]
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    /// Output file; stdout when omitted. A `<out>.meta.json` sidecar records the run.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    #[command(flatten)]
    pub control: ControlArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct TuneArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    #[command(flatten)]
    pub control: ControlArgs,
    /// Tabulate gamma* and the loss reduction over a k grid.
    #[arg(long, value_name = "START:STOP:STEP")]
    pub k_grid: Option<Grid>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    Gamma,
    K,
    Tau,
    M,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Norm,
    RelativeLossReduction,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    #[command(flatten)]
    pub control: ControlArgs,
    #[arg(long, value_enum, default_value_t = Param::Gamma)]
    pub param: Param,
    /// Inclusive grid; the endpoint is kept if within half a step.
    #[arg(long, value_name = "START:STOP:STEP")]
    pub grid: Grid,
    #[arg(long, value_enum, default_value_t = Metric::Norm)]
    pub metric: Metric,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Controller {
    Droop,
    Dapi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Perturbation {
    /// Start at the operating point.
    None,
    /// Random kick through the disturbance input.
    Impulse,
    /// Random zero-mean phase offset.
    Phase,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub network: NetworkArgs,
    #[command(flatten)]
    pub control: ControlArgs,
    #[arg(long, value_enum, default_value_t = Controller::Dapi)]
    pub controller: Controller,
    #[arg(long, default_value_t = 0.005, value_parser = positive)]
    pub dt: f64,
    #[arg(long, default_value_t = 100.0, value_parser = positive)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.0, value_parser = non_negative)]
    pub burn_in: f64,
    /// White-noise intensity per node.
    #[arg(long, default_value_t = 1.0, value_parser = non_negative)]
    pub noise: f64,
    #[arg(long, value_enum, default_value_t = Perturbation::None)]
    pub perturb: Perturbation,
    #[arg(long, default_value_t = 0.1, value_parser = non_negative)]
    pub perturb_scale: f64,
    /// Record every n-th step.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub stride: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ScalingArgs {
    /// Network sizes.
    #[arg(long, value_name = "START:STOP:STEP")]
    pub n_grid: IntGrid,
    /// Random susceptance draws per size.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub seeds: u64,
    #[arg(long, value_name = "LO,HI", default_value = "0.5,1.5")]
    pub b_range: Range,
    #[arg(long, default_value_t = 1.0, value_parser = non_negative)]
    pub alpha: f64,
    #[command(flatten)]
    pub control: ControlArgs,
    /// First seed; draws use seed, seed+1, ...
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}
