use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kbdialog_core::corpus::DatasetFormat;
use kbdialog_core::evaluation::RowChoice;
use kbdialog_core::training::TrainMode;

/// Entity-consistent task-oriented dialogue generation over a relational KB.
///
/// Logging goes to stderr and is controlled by KBDIALOG_LOG
/// (error, warn, info or debug).
#[derive(Debug, Parser)]
#[command(name = "kbdialog", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a raw dataset release into the native JSON-lines format.
    Prepare(PrepareArgs),
    /// Compute distant row labels for every dialogue.
    Label(LabelArgs),
    /// Train one model per domain (or a joint model).
    Train(TrainArgs),
    /// Generate responses and score them.
    Eval(EvalArgs),
    /// Dataset and model analyses.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Talk to a trained model over a single KB, reading utterances from stdin.
    Chat(ChatArgs),
    /// Run prepare, label, train and eval in order.
    Pipeline(PipelineArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FormatArg {
    Native,
    Incar,
    Camrest,
}

impl From<FormatArg> for DatasetFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Native => DatasetFormat::Native,
            FormatArg::Incar => DatasetFormat::InCar,
            FormatArg::Camrest => DatasetFormat::CamRest,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Distant,
    Gumbel,
}

impl From<ModeArg> for TrainMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Distant => TrainMode::Distant,
            ModeArg::Gumbel => TrainMode::Gumbel,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
pub enum RowsArg {
    /// The model's retriever.
    #[default]
    Learned,
    /// The distant label.
    Oracle,
    /// A uniform row distribution.
    Uniform,
}

impl From<RowsArg> for RowChoice {
    fn from(r: RowsArg) -> Self {
        match r {
            RowsArg::Learned => RowChoice::Learned,
            RowsArg::Oracle => RowChoice::Oracle,
            RowsArg::Uniform => RowChoice::Uniform,
        }
    }
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Raw dataset file.
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Layout of the raw file.
    #[arg(long, value_enum)]
    pub format: FormatArg,
    /// Native output file; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Native dataset file.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Labels output (JSON lines); stdout when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

/// Settings shared by `train` and `pipeline`.
#[derive(Debug, Args)]
pub struct TrainOverrides {
    /// key=value training config file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the training mode.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Override the Gumbel-Softmax temperature.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Override the number of epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Train a single model over all domains instead of one per domain.
    #[arg(long)]
    pub joint: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Native training data.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Labels for the training data; computed when omitted.
    #[arg(long, value_name = "PATH")]
    pub labels: Option<PathBuf>,
    /// Native validation data used for checkpoint selection.
    #[arg(long, value_name = "PATH")]
    pub val: Option<PathBuf>,
    /// Output directory for checkpoints and the training report.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct ModelInput {
    /// Checkpoint file, or a directory holding model.kbdg or <domain>/model.kbdg.
    #[arg(long, value_name = "PATH")]
    pub ckpt: PathBuf,
    /// Native dataset file.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Labels for the dataset; computed when omitted.
    #[arg(long, value_name = "PATH")]
    pub labels: Option<PathBuf>,
    /// Where the generation row comes from.
    #[arg(long, value_enum, default_value_t = RowsArg::Learned)]
    pub rows: RowsArg,
    /// Maximum response length in tokens.
    #[arg(long, default_value_t = 40)]
    pub max_len: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: ModelInput,
    /// Report output (JSON); stdout when omitted.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
    /// Also write every generated response as JSON lines.
    #[arg(long, value_name = "PATH")]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Per-domain share of reference responses supported by the labeled row (JSON).
    Support {
        /// Native dataset file.
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        /// Labels for the dataset; computed when omitted.
        #[arg(long, value_name = "PATH")]
        labels: Option<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Consistency of generated responses as the KB is cut down (CSV).
    Rows {
        #[command(flatten)]
        input: ModelInput,
        /// Comma-separated KB sizes.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8")]
        sizes: Vec<usize>,
        /// Output file; stdout when omitted.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Entity-block probabilities at one decode step (CSV, rows x columns).
    Heatmap {
        #[command(flatten)]
        input: ModelInput,
        /// Dialogue index in the data file.
        #[arg(long)]
        dialogue: usize,
        /// Turn index within the dialogue.
        #[arg(long, default_value_t = 0)]
        turn: usize,
        /// Decode step within the reference response.
        #[arg(long)]
        step: usize,
        /// Output file; stdout when omitted.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    /// Checkpoint file or directory.
    #[arg(long, value_name = "PATH")]
    pub ckpt: PathBuf,
    /// KB file: {"domain": str, "columns": [str], "rows": [[str]]}.
    #[arg(long, value_name = "PATH")]
    pub kb: PathBuf,
    /// Domain used to pick a per-domain model; defaults to the KB's own.
    #[arg(long)]
    pub domain: Option<String>,
    /// Print the selected row and the mean column scores after each response.
    #[arg(long)]
    pub show_retrieval: bool,
    /// Maximum response length in tokens.
    #[arg(long, default_value_t = 40)]
    pub max_len: usize,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Raw training dataset.
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Raw test dataset, scored instead of the training data when given.
    #[arg(long, value_name = "PATH")]
    pub test: Option<PathBuf>,
    /// Layout of the raw files.
    #[arg(long, value_enum)]
    pub format: FormatArg,
    /// Working directory for every artifact.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Rerun stages whose outputs already exist.
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}
