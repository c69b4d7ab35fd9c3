use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spinxfer::grape::MaskPreset;

#[derive(Parser, Debug)]
#[command(name = "spinxfer", version, about = "Coherence transfer pulses for Ising spin chains")]
pub struct Cli {
    /// Worker threads for TOP grids and offset profiles (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fidelity of a stored pulse or sequence.
    Simulate(SimulateArgs),
    /// INEPT-cascade baseline on a linear chain.
    Conventional(BaseArgs),
    /// Semi-analytic single-channel pulse for a three-spin chain.
    Analytic3(AnalyticArgs),
    /// Two-channel analytic pulse for a four-spin chain.
    Analytic4(AnalyticArgs),
    /// One GRAPE optimization at a fixed duration.
    Grape(GrapeArgs),
    /// Best fidelity over a grid of durations.
    Top(TopArgs),
    /// Convert a single-channel shaped pulse into a DANTE train.
    Dante(DanteArgs),
    /// Transfer fidelity versus the offset of one spin.
    Profile(ProfileArgs),
    /// Render a result file as SVG.
    Plot(PlotArgs),
    /// Run a JSON job file.
    Run {
        #[arg(long)]
        job: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
pub struct SystemArgs {
    /// Spin system JSON file (`n`, `couplings`, optional `offsets`).
    #[arg(long, conflicts_with = "chain")]
    pub system: Option<PathBuf>,

    /// Linear chain couplings in Hz, e.g. `88.05,88.05`.
    #[arg(long, value_delimiter = ',')]
    pub chain: Option<Vec<f64>>,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    #[arg(long, default_value = "out")]
    pub out: PathBuf,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct TransferArgs {
    /// Initial operator, one label per spin (default `x1…1`).
    #[arg(long)]
    pub initial: Option<String>,

    /// Target operator (default `yy…yz`).
    #[arg(long)]
    pub target: Option<String>,

    /// Swap initial and target.
    #[arg(long)]
    pub reverse: bool,
}

#[derive(Args, Debug, Clone)]
pub struct BaseArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub base: BaseArgs,
    #[command(flatten)]
    pub transfer: TransferArgs,

    /// Pulse file (JSON document or CSV shape).
    #[arg(long)]
    pub pulse: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct AnalyticArgs {
    #[command(flatten)]
    pub base: BaseArgs,

    /// Segment duration in seconds.
    #[arg(long, default_value_t = 2e-5)]
    pub dt: f64,
}

#[derive(Args, Debug, Clone)]
pub struct OptimArgs {
    #[command(flatten)]
    pub transfer: TransferArgs,

    /// Control-mask preset.
    #[arg(long, default_value = "interior-y")]
    pub mask: MaskPreset,

    /// Explicit channels such as `2y,3x`; overrides `--mask`.
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<String>>,

    /// Segments per pulse (default: 50 µs segments, at least 100).
    #[arg(long)]
    pub segments: Option<usize>,

    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,

    /// Random restarts per duration.
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,

    #[arg(long, default_value_t = 0.9999)]
    pub target_fidelity: f64,

    /// Fixed step size instead of the L-BFGS line search.
    #[arg(long)]
    pub fixed_step: Option<f64>,

    #[arg(long, value_enum, default_value_t = GradientArg::Exact)]
    pub gradient: GradientArg,

    /// Amplitude bound in Hz.
    #[arg(long)]
    pub bound: Option<f64>,

    /// Amplitude range of random initial pulses in Hz (default: largest coupling).
    #[arg(long)]
    pub init_amplitude: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum GradientArg {
    Exact,
    FirstOrder,
}

#[derive(Args, Debug, Clone)]
pub struct GrapeArgs {
    #[command(flatten)]
    pub base: BaseArgs,
    #[command(flatten)]
    pub optim: OptimArgs,

    /// Pulse duration in seconds.
    #[arg(long)]
    pub duration: f64,

    /// Initial pulse file; random start otherwise.
    #[arg(long)]
    pub init: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct TopArgs {
    #[command(flatten)]
    pub base: BaseArgs,
    #[command(flatten)]
    pub optim: OptimArgs,

    /// Durations `start:stop:step` in seconds.
    #[arg(long)]
    pub t_grid: String,

    /// Seed every point with the previous point's pulse (runs serially).
    #[arg(long)]
    pub warm_start: bool,

    /// Scan down from the longest duration and stop at the first failure.
    #[arg(long, conflicts_with = "warm_start")]
    pub descend: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum RefocusingArg {
    Ideal,
    Finite,
}

#[derive(Args, Debug, Clone)]
pub struct DanteArgs {
    #[command(flatten)]
    pub base: BaseArgs,
    #[command(flatten)]
    pub transfer: TransferArgs,

    /// Single-channel shaped pulse file.
    #[arg(long)]
    pub pulse: PathBuf,

    /// Nominal flip per hard pulse in degrees.
    #[arg(long, default_value_t = 45.0)]
    pub flip_per_pulse: f64,

    /// Hard-pulse rf amplitude in Hz.
    #[arg(long, default_value_t = 10_000.0)]
    pub rf_amp: f64,

    #[arg(long, value_enum, default_value_t = RefocusingArg::Ideal)]
    pub refocusing: RefocusingArg,
}

#[derive(Args, Debug, Clone)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub base: BaseArgs,
    #[command(flatten)]
    pub transfer: TransferArgs,

    /// Pulse or sequence file.
    #[arg(long)]
    pub pulse: PathBuf,

    /// Offsets cover `[-range, range]` Hz.
    #[arg(long, default_value_t = 1000.0)]
    pub offset_range: f64,

    /// Spin whose offset is swept.
    #[arg(long, default_value_t = 2)]
    pub offset_spin: usize,

    #[arg(long, default_value_t = 81)]
    pub steps: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum PlotKind {
    Pulse,
    Topcurve,
    Profile,
}

#[derive(Args, Debug, Clone)]
pub struct PlotArgs {
    /// Result file: pulse JSON/CSV, `top.csv` or `profile.csv`.
    #[arg(long)]
    pub input: PathBuf,

    #[arg(long, value_enum)]
    pub kind: PlotKind,

    /// SVG path (default: the input path with an `.svg` extension).
    #[arg(long)]
    pub output: Option<PathBuf>,
}
