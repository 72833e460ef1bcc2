use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "dynstress",
    version,
    about = "Dynamic stress labelling, training and evaluation over windowed speech",
    args_override_self = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cut every manifest clip into 10 s windows with a 5 s hop and align span labels
    Segment(SegmentArgs),
    /// Concatenate same-speaker, same-text utterances into emotion progressions
    Augment(AugmentArgs),
    /// Relabel aligned windows with the decayed-distance stress rule
    Label(LabelArgs),
    /// Write per-window feature files
    Extract(ExtractArgs),
    /// Train a stress model
    Train(TrainArgs),
    /// Score a checkpoint at segment or sequence level
    Eval(EvalArgs),
    /// Agreement of the labelling rule with reference stress annotations over an n x lambda grid
    Sweep(SweepArgs),
    /// Score several checkpoints into one table
    Ablate(AblateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Segment(_) => "segment",
            Command::Augment(_) => "augment",
            Command::Label(_) => "label",
            Command::Extract(_) => "extract",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Sweep(_) => "sweep",
            Command::Ablate(_) => "ablate",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Manifest (JSON lines)
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory [default: $DYNSTRESS_RUN_DIR/<command> or runs/<command>]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `key = value` file; flags given on the command line take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LabelOpts {
    /// History length in windows
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    /// Decay rate
    #[arg(long, default_value_t = 0.8)]
    pub lambda: f64,
    /// Threshold fraction of the maximum decayed distance
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FeatureOpts {
    /// `mfcc` or `file:<dir>` with one `<utterance_id>.fseq` per clip
    #[arg(long, default_value = "mfcc")]
    pub features: String,
    /// Append delta coefficients to MFCCs
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    pub deltas: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchArg {
    Lstm,
    Transformer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Segment,
    Sequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SegmentArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AugmentArgs {
    #[command(flatten)]
    pub common: Common,
    /// Seconds of silence between joined utterances
    #[arg(long, default_value_t = 0.0)]
    pub gap: f64,
    /// Split assigned to the augmented clips
    #[arg(long, value_enum, default_value_t = SplitArg::Train)]
    pub split: SplitArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LabelArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub labelling: LabelOpts,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub features: FeatureOpts,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value_t = ArchArg::Lstm)]
    pub arch: ArchArg,
    #[command(flatten)]
    pub features: FeatureOpts,
    #[command(flatten)]
    pub labelling: LabelOpts,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// [default: 20 for lstm, 50 for transformer]
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Probability of feeding ground-truth context during training
    #[arg(long, default_value_t = 0.8)]
    pub teacher_forcing: f64,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr_decay: f64,
    #[arg(long, default_value_t = 5)]
    pub lr_decay_every: usize,
    #[arg(long, default_value_t = 128)]
    pub hidden: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 256)]
    pub ffn: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 0.3)]
    pub dropout: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, value_enum, default_value_t = Level::Segment)]
    pub level: Level,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[command(flatten)]
    pub features: FeatureOpts,
    /// Labelling history for targets [default: the checkpoint's context length]
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0.8)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// History lengths: `a..b` (inclusive) or a comma list
    #[arg(long, default_value = "0..5")]
    pub n: String,
    /// Comma-separated decay rates
    #[arg(long, default_value = "0.01,0.1,0.8,1")]
    pub lambda: String,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Largest window distance at which a reference may be matched
    #[arg(long, default_value_t = 0)]
    pub tolerance: usize,
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    pub split: SplitArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated checkpoint paths
    #[arg(long, value_delimiter = ',', required = true, action = clap::ArgAction::Set)]
    pub ckpt: Vec<PathBuf>,
    /// Comma-separated feature sources, one per checkpoint or one for all
    #[arg(long, value_delimiter = ',', default_value = "mfcc", action = clap::ArgAction::Set)]
    pub features: Vec<String>,
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    pub deltas: bool,
    #[arg(long, value_enum, default_value_t = Level::Segment)]
    pub level: Level,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long, default_value_t = 0.8)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
}
