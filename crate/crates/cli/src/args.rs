use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use craterscan::annotations::Split;

#[derive(Debug, Parser)]
#[command(name = "craterscan", version, about = "Tiled crater detection, evaluation and region reports")]
pub struct Cli {
    /// Pipeline config (JSON). Command-line flags override its values.
    #[arg(long, global = true, env = "CRATERSCAN_CONFIG")]
    pub config: Option<PathBuf>,

    /// Minimum level of the JSON log events written to stderr.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: tracing::Level,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inspect, split, crop and count YOLO datasets.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Sliding-window planning.
    #[command(subcommand)]
    Tile(TileCommand),
    /// Run a detector backend over a dataset split.
    Detect(DetectArgs),
    /// Score run files against ground truth.
    Eval(EvalArgs),
    /// Compare models by mean per-class rank.
    Rank(RankArgs),
    /// Summarize one image's detections over a geographic region.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Load every split and check labels, class ids and split disjointness.
    Validate {
        #[arg(long)]
        root: PathBuf,
    },
    /// Shuffle an images/labels pair into train/val/test.
    Split(SplitArgs),
    /// Extract classifier chips for every labelled box in a split.
    Crop(CropArgs),
    /// Per-split per-class box counts.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub images: PathBuf,
    /// Defaults to the sibling `labels` directory of --images.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub train: Option<f64>,
    #[arg(long)]
    pub val: Option<f64>,
    #[arg(long)]
    pub test: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CropArgs {
    #[arg(long)]
    pub root: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = craterscan::annotations::CHIP_SIZE_PX)]
    pub size: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatsBasisArg {
    /// Trust the class id in each label line.
    Labels,
    /// Reclassify each box from its size using the configured thresholds.
    Size,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TextOrJson {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub root: PathBuf,
    #[arg(long, value_enum, default_value = "labels")]
    pub basis: StatsBasisArg,
    /// Region file, needed with `--basis size` in kilometre mode.
    #[arg(long)]
    pub region: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: TextOrJson,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum TileCommand {
    /// Emit the window plan for an image size as JSON.
    Plan(TilePlanArgs),
}

#[derive(Debug, Args)]
pub struct TilePlanArgs {
    #[arg(long)]
    pub width: u32,
    #[arg(long)]
    pub height: u32,
    #[arg(long)]
    pub tile_size: Option<u32>,
    #[arg(long)]
    pub overlap: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Direct,
    Tiled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Replay,
    Bridge,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Defaults to the backend named in the config.
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
    /// Bridge program and arguments.
    #[arg(long, num_args = 1.., value_name = "ARG")]
    pub bridge_cmd: Option<Vec<String>>,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads for window dispatch [default: available cores].
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub tile_size: Option<u32>,
    #[arg(long)]
    pub overlap: Option<f64>,
    #[arg(long)]
    pub nms_iou: Option<f64>,
    /// Let boxes of different classes suppress each other.
    #[arg(long)]
    pub class_agnostic_nms: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replay noise: probability of dropping each box.
    #[arg(long)]
    pub drop_prob: Option<f64>,
    /// Replay noise: uniform per-edge jitter in pixels.
    #[arg(long)]
    pub jitter_px: Option<f64>,
    /// Replay noise: sample confidences uniformly from [lo, hi].
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    pub conf_range: Option<Vec<f64>>,
    /// Record the wall-clock time in the provenance block.
    #[arg(long)]
    pub timestamp: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run file; repeat to aggregate mean ± std over runs.
    #[arg(long = "run", required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long)]
    pub match_iou: Option<f64>,
    /// Ignore classes when pairing predictions with ground truth.
    #[arg(long)]
    pub class_agnostic: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["scores", "model"]))]
pub struct RankArgs {
    /// JSON file `{"models": [..], "classes": [..], "scores": [[..], ..]}`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// `NAME=PATH` to an `eval` output; repeat for each model.
    #[arg(long)]
    pub model: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UnitArg {
    Km,
    Px,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Required when the run holds more than one image.
    #[arg(long)]
    pub image_id: Option<String>,
    /// Region file; defaults to the config's `region`.
    #[arg(long)]
    pub region: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    pub format: String,
    #[arg(long)]
    pub small_max: Option<f64>,
    #[arg(long)]
    pub large_min: Option<f64>,
    #[arg(long, value_enum)]
    pub units: Option<UnitArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
