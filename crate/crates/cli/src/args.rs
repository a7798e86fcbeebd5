use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "inputmix", version, about = "Dynamics-driven input-frame composition for video inpainting")]
pub struct Cli {
    /// Worker threads for per-video and per-target parallelism.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Seed for synthetic scenes and masks.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-target dynamics scores as CSV.
    Analyze(AnalyzeArgs),
    /// Sweep a corpus and fit a calibration profile.
    Calibrate(CalibrateArgs),
    /// Print the input composition chosen for one target.
    Configure(ConfigureArgs),
    /// Inpaint every target of a sequence.
    Inpaint(InpaintArgs),
    /// Masked PSNR/SSIM of an inpainted run against ground truth.
    Evaluate(EvaluateArgs),
    /// PSNR over the seven reference ratios, or the memory/quality tradeoff.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scene {
    Static,
    Reveal,
    Medium,
    Fast,
}

impl From<Scene> for inputmix::synth::SceneKind {
    fn from(s: Scene) -> Self {
        use inputmix::synth::SceneKind;
        match s {
            Scene::Static => SceneKind::Static,
            Scene::Reveal => SceneKind::Reveal,
            Scene::Medium => SceneKind::Medium,
            Scene::Fast => SceneKind::Fast,
        }
    }
}

/// Where the frames come from: a sequence directory or a seeded synthetic scene.
#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Sequence directory holding `frames/%05d.ppm` and `masks/%05d.pgm`.
    #[arg(long, conflicts_with = "synthetic")]
    pub input: Option<PathBuf>,
    /// Generate a synthetic scene instead of reading one.
    #[arg(long, value_enum)]
    pub synthetic: Option<Scene>,
    #[arg(long, default_value_t = 90)]
    pub frames: usize,
    #[arg(long, default_value_t = 96)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
}

#[derive(Debug, Clone, Args)]
pub struct MemoryArgs {
    /// Memory budget in MB; the input count becomes the most frames it affords.
    #[arg(long, conflicts_with = "total")]
    pub budget_mb: Option<u32>,
    #[arg(long, default_value_t = 662)]
    pub per_frame_mb: u32,
    #[arg(long, default_value_t = 0)]
    pub base_mb: u32,
    /// Input frame count (default 8 when no budget is given).
    #[arg(long)]
    pub total: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct PolicyArgs {
    /// Calibration profile JSON; without it the balanced split is used.
    #[arg(long, conflicts_with = "force_ratio")]
    pub profile: Option<PathBuf>,
    /// Use this reference ratio for every target.
    #[arg(long)]
    pub force_ratio: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct LayoutArgs {
    /// Spacing of reference frames.
    #[arg(long, default_value_t = 10)]
    pub stride: usize,
    /// Center the neighbor window on the target instead of trailing it.
    #[arg(long)]
    pub symmetric: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Adapter {
    Baseline,
    External,
}

#[derive(Debug, Clone, Args)]
pub struct AdapterArgs {
    #[arg(long, value_enum, default_value = "baseline")]
    pub adapter: Adapter,
    /// External inpainter command; the job directory is appended as its last argument.
    #[arg(long, num_args = 1.., allow_hyphen_values = true)]
    pub adapter_cmd: Option<Vec<String>>,
    /// Seconds before an external inpainter call is killed.
    #[arg(long, default_value_t = 300)]
    pub adapter_timeout: u64,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Normalize and combine scores with this profile.
    #[arg(long)]
    pub profile: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Corpus manifest JSON.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub total: usize,
    #[arg(long, default_value_t = 10)]
    pub stride: usize,
    #[command(flatten)]
    pub adapter: AdapterArgs,
}

#[derive(Debug, Args)]
pub struct ConfigureArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Target frame index (default: the last frame).
    #[arg(long)]
    pub target: Option<usize>,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[command(flatten)]
    pub memory: MemoryArgs,
    #[command(flatten)]
    pub layout: LayoutArgs,
}

#[derive(Debug, Args)]
pub struct InpaintArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[command(flatten)]
    pub memory: MemoryArgs,
    #[command(flatten)]
    pub layout: LayoutArgs,
    #[command(flatten)]
    pub adapter: AdapterArgs,
    /// First target (default: the first with a full history).
    #[arg(long)]
    pub from: Option<usize>,
    /// Last target (default: the last frame).
    #[arg(long)]
    pub to: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Ground truth.
    #[command(flatten)]
    pub input: InputArgs,
    /// Inpainted run directory (as written by `inpaint`).
    #[arg(long)]
    pub run: PathBuf,
    /// Second run to compare against; writes per-frame deltas `run - against`.
    #[arg(long)]
    pub against: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 8)]
    pub total: usize,
    #[arg(long, default_value_t = 10)]
    pub stride: usize,
    #[command(flatten)]
    pub adapter: AdapterArgs,
    /// Sweep input counts instead of ratios.
    #[arg(long)]
    pub tradeoff: bool,
    /// Corpus manifest for the tradeoff (instead of a single input).
    #[arg(long, requires = "tradeoff")]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub min_total: usize,
    #[arg(long, default_value_t = 11)]
    pub max_total: usize,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long, default_value_t = 662)]
    pub per_frame_mb: u32,
    #[arg(long, default_value_t = 0)]
    pub base_mb: u32,
}
