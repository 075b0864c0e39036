use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use geostack_core::training::OrthoReduction;
use geostack_core::TrainConfig;

#[derive(Debug, Parser)]
#[command(
    name = "geostack",
    version,
    about = "Train, stack, fold and diagnose upper-triangular embedding adapters"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labelled embedding dataset
    GenData(GenDataArgs),
    /// Train one expert on a dataset
    Train(TrainArgs),
    /// Write a stack manifest and report composition diagnostics
    Stack(StackArgs),
    /// Evaluate accuracy under an identity, a layer or a stack
    Eval(EvalArgs),
    /// Run the class-incremental protocol
    Cil(CilArgs),
    /// Accuracy dispersion over stacking orders
    Permute(PermuteArgs),
    /// Apply synthetic experts of prescribed orthogonality error
    Stress(StressArgs),
    /// Train one expert per lambda and record OE and accuracy
    LambdaSweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnchorArg {
    Orthonormal,
    RandomUnit,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 50)]
    pub per_class: usize,
    /// Concentration; per-coordinate noise std is 1/kappa ("inf" for none)
    #[arg(long, default_value_t = 4.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Strength of the seeded linear distortion between class centres and anchors
    #[arg(long, default_value_t = 0.0)]
    pub shift: f64,
    /// Weight of a direction shared by all anchors, in [0, 1)
    #[arg(long, default_value_t = 0.0)]
    pub coherence: f64,
    #[arg(long, value_enum, default_value_t = AnchorArg::Orthonormal)]
    pub anchors: AnchorArg,
    /// Shorthand for --anchors orthonormal
    #[arg(long, conflicts_with = "anchors")]
    pub orthonormal: bool,
    #[arg(long)]
    pub domain_id: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReductionArg {
    Sum,
    PerRow,
    PerEntry,
}

/// Optimizer and few-shot settings shared by every training command.
#[derive(Debug, Clone, Args)]
pub struct TrainOpts {
    #[arg(long, default_value_t = 0.95)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.07)]
    pub tau: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    /// Samples per class drawn for training
    #[arg(long, default_value_t = 16)]
    pub shots: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    /// Scaling of the orthogonality term in the objective
    #[arg(long, value_enum, default_value_t = ReductionArg::PerRow)]
    pub ortho_reduction: ReductionArg,
}

impl TrainOpts {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            batch_size: self.batch,
            epochs: self.epochs,
            lambda: self.lambda,
            tau: self.tau,
            shots: self.shots,
            seed: self.seed,
            weight_decay: self.weight_decay,
            ortho_reduction: match self.ortho_reduction {
                ReductionArg::Sum => OrthoReduction::Sum,
                ReductionArg::PerRow => OrthoReduction::PerRow,
                ReductionArg::PerEntry => OrthoReduction::PerEntry,
            },
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub train: TrainOpts,
    /// Layer file to write
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-epoch loss history (.csv or .json)
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Product,
    TaskArithmetic,
}

#[derive(Debug, Clone, Args)]
pub struct MergeOpts {
    /// How layers are merged
    #[arg(long, value_enum, default_value_t = ModeArg::Product)]
    pub mode: ModeArg,
    /// Scale of the summed perturbations in task-arithmetic mode
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct StackArgs {
    /// Layer files in stacking order (first is applied first)
    #[arg(long, num_args = 1.., required = true)]
    pub layers: Vec<PathBuf>,
    #[arg(long)]
    pub out_manifest: PathBuf,
    #[command(flatten)]
    pub merge: MergeOpts,
    /// Projection to fold the stack into
    #[arg(long, requires = "out_proj")]
    pub fold_projection: Option<PathBuf>,
    /// Where to write the folded projection
    #[arg(long, requires = "fold_projection")]
    pub out_proj: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("operator").required(true).args(["manifest", "layer", "identity"]))]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub layer: Option<PathBuf>,
    #[arg(long)]
    pub identity: bool,
    /// Print accuracy per class
    #[arg(long)]
    pub per_class: bool,
    /// Write per-sample margins (.csv or .json)
    #[arg(long)]
    pub margins: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CilArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub tasks: usize,
    /// Randomize the class partition with this seed instead of contiguous blocks
    #[arg(long)]
    pub shuffle_classes: Option<u64>,
    #[command(flatten)]
    pub train: TrainOpts,
    #[command(flatten)]
    pub merge: MergeOpts,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PermuteArgs {
    /// Datasets, one per layer
    #[arg(long, num_args = 1.., required = true)]
    pub data_list: Vec<PathBuf>,
    /// Layers, `layer_list[i]` trained on `data_list[i]`
    #[arg(long, num_args = 1.., required = true)]
    pub layer_list: Vec<PathBuf>,
    /// Orderings to sample; 0 evaluates all of them (at most 4 layers)
    #[arg(long, default_value_t = 0)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StressArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Target normalized OE values, ascending (default grid spans 1e-5 to 1.7)
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub gammas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [0.5, 0.7, 0.9, 0.95, 0.99])]
    pub lambdas: Vec<f64>,
    #[command(flatten)]
    pub train: TrainOpts,
    #[arg(long)]
    pub out: PathBuf,
}
