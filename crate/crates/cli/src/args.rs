use std::path::PathBuf;

use bmseg::eval::Variant;
use bmseg::phantom::Difficulty;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

/// Environment variable naming the directory that relative `--out` paths are placed under.
pub const OUT_ROOT_ENV: &str = "BMSEG_OUT_ROOT";

#[derive(Parser, Debug, Clone, Serialize, Deserialize)]
#[command(name = "bmseg", version, about = "Boundary regression pipelines on OCT-like volumes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Generate a synthetic phantom suite.
    Phantom(PhantomArgs),
    /// Train the toy predictor on one or more datasets.
    Train(TrainArgs),
    /// Predict surfaces and uncertainties for every volume of a dataset.
    Infer(InferArgs),
    /// Replace uncertain positions with a thin-plate spline surface.
    Postprocess(PostprocessArgs),
    /// Score predicted surfaces against a reference.
    Eval(EvalArgs),
    /// Compare loss and post-processing variants under identical seeds.
    Ablate(AblateArgs),
    /// Re-run a command from its run manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Phantom(_) => "phantom",
            Command::Train(_) => "train",
            Command::Infer(_) => "infer",
            Command::Postprocess(_) => "postprocess",
            Command::Eval(_) => "eval",
            Command::Ablate(_) => "ablate",
            Command::Replay(_) => "replay",
        }
    }

    pub fn out_mut(&mut self) -> Option<&mut PathBuf> {
        match self {
            Command::Phantom(a) => Some(&mut a.out),
            Command::Train(a) => Some(&mut a.out),
            Command::Infer(a) => Some(&mut a.out),
            Command::Postprocess(a) => Some(&mut a.out),
            Command::Eval(a) => Some(&mut a.out),
            Command::Ablate(a) => Some(&mut a.out),
            Command::Replay(_) => None,
        }
    }

    pub fn set_jobs(&mut self, jobs: usize) {
        match self {
            Command::Train(a) => a.jobs = jobs,
            Command::Infer(a) => a.jobs = jobs,
            Command::Ablate(a) => a.jobs = jobs,
            _ => {}
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct PhantomArgs {
    #[arg(long, default_value = "mixed")]
    pub suite: Difficulty,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub bscans: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct LossArgs {
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Curvature window; defaults to about 4% of the image width, odd.
    #[arg(long)]
    pub h: Option<usize>,
    /// Target distribution standard deviation in pixels.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// Epochs at which the learning rate is cut.
    #[arg(long, value_delimiter = ',', default_value = "3,7,10,30")]
    pub milestones: Vec<usize>,
    #[arg(long, default_value_t = 0.7)]
    pub decay: f64,
    /// Probability of each augmentation firing.
    #[arg(long, default_value_t = 0.3)]
    pub augment_prob: f64,
    /// Channel widths, input first and output last.
    #[arg(long, value_delimiter = ',', default_value = "1,8,8,1")]
    pub widths: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub kernel: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Dataset directory; repeat to train on several.
    #[arg(long, required = true)]
    pub data: Vec<PathBuf>,
    #[command(flatten)]
    pub loss: LossArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Also write the per-column probability maps.
    #[arg(long)]
    pub save_probmaps: bool,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct PostprocessArgs {
    /// Surface set with uncertainties, as written by `infer`.
    #[arg(long)]
    pub input: PathBuf,
    /// Positions with a spread above this are replaced.
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.05)]
    pub rigidity: f64,
    #[arg(long, default_value_t = 1024)]
    pub n_control: usize,
    #[arg(long, default_value_t = 0.6)]
    pub pool_percentile: f64,
    /// Alignment row; half the image height by default.
    #[arg(long)]
    pub reference: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EvalArgs {
    /// Predicted surface set (or a dataset, whose truth is then scored).
    #[arg(long)]
    pub pred: PathBuf,
    /// Dataset or surface set holding the reference surfaces.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub bin_width: f64,
    #[arg(long, default_value_t = 999)]
    pub permutations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct AblateArgs {
    #[arg(long, required = true)]
    pub train: Vec<PathBuf>,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "l1+l2,l1+l2+l3,l1+l2+l3+tps")]
    pub variants: Vec<Variant>,
    #[command(flatten)]
    pub loss: LossArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.05)]
    pub rigidity: f64,
    #[arg(long, default_value_t = 1024)]
    pub n_control: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write to this directory instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the recorded thread count.
    #[arg(long)]
    pub jobs: Option<usize>,
}
