//! `firecast`: train, evaluate and map wildfire-cause models.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use firecast_core::config::{ModelSelection, RunConfig};
use firecast_core::data::{ResampleMethod, SmoteMode};
use firecast_core::models::LossKind;

#[derive(Parser)]
#[command(name = "firecast", version, about = "Wildfire-cause forecasting from weather, vegetation and imagery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and archive the run.
    Train(TrainArgs),
    /// Score a saved checkpoint on a record file.
    Eval(EvalArgs),
    /// Score a grid of tiles that share one tabular row.
    PredictGrid(GridArgs),
    /// Write a synthetic record file (and optional tiles) for trying the tool.
    GenerateSynthetic(SyntheticArgs),
    /// Write the image branch's intermediate feature maps for one tile.
    DumpFeatures(DumpArgs),
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected True or False, got `{s}`")),
    }
}

fn parse_resample(s: &str) -> Result<ResampleMethod, String> {
    match s.to_ascii_lowercase().as_str() {
        "undersampling" | "undersample" => Ok(ResampleMethod::Undersample),
        "smote" => Ok(ResampleMethod::Smote),
        "none" => Ok(ResampleMethod::None),
        _ => Err(format!("unknown resample method `{s}` (undersampling, smote, none)")),
    }
}

fn parse_model(s: &str) -> Result<ModelSelection, String> {
    match s.to_ascii_lowercase().as_str() {
        "baseline" | "baseline model" => Ok(ModelSelection::Baseline),
        "hybrid" | "hybrid model" => Ok(ModelSelection::Hybrid),
        _ => Err(format!("unknown model `{s}` (baseline, hybrid model)")),
    }
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    match s.to_ascii_lowercase().replace('_', "-").as_str() {
        "mse" => Ok(LossKind::Mse),
        "cross-entropy" | "ce" => Ok(LossKind::CrossEntropy),
        _ => Err(format!("unknown loss `{s}` (mse, cross-entropy)")),
    }
}

fn parse_smote_mode(s: &str) -> Result<SmoteMode, String> {
    match s.to_ascii_lowercase().replace('_', "-").as_str() {
        "standard" => Ok(SmoteMode::Standard),
        "absolute-offset" | "absolute" => Ok(SmoteMode::AbsoluteOffset),
        _ => Err(format!("unknown SMOTE mode `{s}` (standard, absolute-offset)")),
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Fire record CSV.
    #[arg(long)]
    data: PathBuf,
    /// Directory of 100×100 tiles named `<FOD_ID>.pgm` or `.png`.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Vegetation category to group mapping (`category,group`).
    #[arg(long)]
    veg_map: Option<PathBuf>,
    /// Root directory for archived runs.
    #[arg(long, default_value = "saved_progress")]
    output: PathBuf,
    /// check box for vegetation categories as features
    #[arg(long, value_parser = parse_bool, action = ArgAction::Set, default_value = "True")]
    with_vegetation: bool,
    /// check box for satellite images as features
    #[arg(long, value_parser = parse_bool, action = ArgAction::Set, default_value = "False")]
    satellite_img: bool,
    /// images are converted to gray scale (only gray scale is supported)
    #[arg(long, value_parser = parse_bool, action = ArgAction::Set, default_value = "True")]
    gray_scale: bool,
    /// choose resample methods
    #[arg(long, value_parser = parse_resample, default_value = "undersampling")]
    resample_method: ResampleMethod,
    /// with previous checked, choosing proportion for undersampling
    #[arg(long, default_value_t = 1.8)]
    other_size: f64,
    /// the proportion of test set
    #[arg(long, default_value_t = 0.2)]
    test_size: f64,
    /// check box for save the results
    #[arg(long, value_parser = parse_bool, action = ArgAction::Set, default_value = "True")]
    archive: bool,
    /// the seed for randomness
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// select training models
    #[arg(long, value_parser = parse_model, default_value = "baseline")]
    model_selection: ModelSelection,
    /// choose loss function
    #[arg(long, value_parser = parse_loss, default_value = "mse")]
    loss_function: LossKind,
    /// learning rate for optimizer
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    /// the amount of iterations training will run
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// show the loss and accuracy
    #[arg(long, alias = "display_step", default_value_t = 10)]
    display_step: usize,
    /// probabilities above it are classified as natural causes
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// check box for allowing batch during training
    #[arg(long, value_parser = parse_bool, action = ArgAction::Set, default_value = "False")]
    batch: bool,
    /// with previous checked, the size of each batch
    #[arg(long)]
    batch_size: Option<usize>,
    /// z-score the tabular features with training-split statistics
    #[arg(long, value_parser = parse_bool, action = ArgAction::Set, default_value = "True")]
    standardize: bool,
    /// nearest neighbours considered by SMOTE
    #[arg(long, default_value_t = 5)]
    smote_k: usize,
    /// SMOTE interpolation rule
    #[arg(long, value_parser = parse_smote_mode, default_value = "standard")]
    smote_mode: SmoteMode,
}

impl TrainArgs {
    fn run_config(&self) -> RunConfig {
        RunConfig {
            with_vegetation: self.with_vegetation,
            satellite_img: self.satellite_img,
            gray_scale: self.gray_scale,
            resample_method: self.resample_method,
            other_size: self.other_size,
            test_size: self.test_size,
            archive: self.archive,
            seed: self.seed,
            model_selection: self.model_selection,
            loss_function: self.loss_function,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            display_step: self.display_step,
            threshold: self.threshold,
            batch: self.batch,
            batch_size: self.batch_size,
            standardize: self.standardize,
            smote_k: self.smote_k,
            smote_mode: self.smote_mode,
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Fire record CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    veg_map: Option<PathBuf>,
    /// A run's `split_index.csv`; only its test rows are scored.
    #[arg(long)]
    split_index: Option<PathBuf>,
    /// Overrides the threshold stored in the checkpoint.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Comma-separated raw feature row shared by every tile.
    #[arg(long, allow_hyphen_values = true)]
    info: String,
    /// Tiles named by row-major index: `0.pgm`, `1.pgm`, ...
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    /// Latitude of the grid's northwest corner.
    #[arg(long, allow_hyphen_values = true)]
    origin_lat: f64,
    /// Longitude of the grid's northwest corner.
    #[arg(long, allow_hyphen_values = true)]
    origin_lon: f64,
    /// Receives `grid.csv` and `heatmap.pgm`.
    #[arg(long, default_value = "grid_output")]
    output: PathBuf,
}

#[derive(Args)]
struct SyntheticArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 1000)]
    rows: usize,
    /// Share of lightning-caused records.
    #[arg(long, default_value_t = 0.3)]
    natural_share: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write a brightness-coded tile per record under `tiles/`.
    #[arg(long, value_parser = parse_bool, action = ArgAction::Set, default_value = "False")]
    images: bool,
}

#[derive(Args)]
struct DumpArgs {
    /// A hybrid-model checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value = "feature_maps")]
    output: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::PredictGrid(a) => commands::predict_grid(a),
        Command::GenerateSynthetic(a) => commands::generate_synthetic(a),
        Command::DumpFeatures(a) => commands::dump_features(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<firecast_core::Error>().map_or(3, firecast_core::Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
