//! The `gvtcnn` command line: data generation, training, held-out
//! interpolation evaluation, motion-compensation simulation, synthetic
//! corpora and manifest replay.

pub mod commands;
pub mod error;
pub mod eval;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use gvtcnn_core::mcsim::SelectionMode;
use gvtcnn_core::Variant;

pub use error::{CliError, CliResult, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "gvtcnn", version, about = "Sub-pixel interpolation with DCTIF and GVTCNN")]
#[command(args_override_self = true)]
#[command(after_help = "Exit codes: 0 success, 2 usage or configuration, 3 data or format, 4 numeric failure.")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Args)]
pub struct Common {
    /// Seed for every random draw of the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses all cores. 1 is the reproducible reference mode.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Directory receiving the outputs and manifest.json [default: out].
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

impl Common {
    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a GVTD training dataset from a directory of PGM images.
    #[command(after_help = "Writes dataset.gvtd and manifest.json; prints the pair count.")]
    GenData(GenDataArgs),
    /// Train a network on a GVTD dataset.
    #[command(after_help = "Writes weights.gvtw, loss.csv (iteration,lr,loss) and manifest.json.")]
    Train(TrainArgs),
    /// Compare copy, DCTIF and GVTCNN on held-out synthesized ground truth.
    #[command(after_help = "Writes eval.csv with columns \
variant,position,dx,dy,psnr_copy,psnr_dctif,psnr_gvtcnn,gain_vs_copy,gap_vs_dctif,images,train_overlap \
followed by a mean row.")]
    EvalInterp(EvalArgs),
    /// Run block motion compensation over a frame sequence.
    #[command(after_help = "Writes report.csv with columns \
frame,psnr_db,mean_sad,mean_integer_sad,mean_dctif_sad,mean_gvtcnn_sad,mv_bits,flag_bits,proxy_bits,\
total_cost,blocks,dctif_blocks,gvtcnn_blocks,mode followed by a mean row.")]
    Simulate(SimulateArgs),
    /// Write procedurally generated PGM images or a moving sequence.
    Synth(SynthArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Clone, Debug, Args)]
pub struct GenDataArgs {
    /// Directory of binary PGM images, read in file-name order.
    #[arg(long)]
    pub corpus: PathBuf,
    /// h (three half-pel heads) or q (twelve quarter-pel heads).
    #[arg(long)]
    pub variant: Variant,
    /// Quantization parameter of the degradation.
    #[arg(long)]
    pub qp: u8,
    /// Lower bound of the blur std draw; defaults to the variant's range.
    #[arg(long)]
    pub std_min: Option<f64>,
    #[arg(long)]
    pub std_max: Option<f64>,
    #[arg(long, default_value_t = 16)]
    pub stride: usize,
    /// Skip the quantization proxy and train on clean integer samples.
    #[arg(long, conflicts_with = "degraded")]
    pub no_degradation: bool,
    /// Directory of already-degraded integer planes, one PGM per corpus image.
    #[arg(long)]
    pub degraded: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct TrainArgs {
    /// GVTD dataset written by gen-data.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Expected variant; a dataset of the other variant is a configuration error.
    #[arg(long)]
    pub variant: Option<Variant>,
    /// QP tag stored in the weights; defaults to the tag nearest the dataset QP.
    #[arg(long)]
    pub qp_tag: Option<u8>,
    #[arg(long, default_value_t = 50_000)]
    pub iters: u64,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Last iteration at the initial rate. Defaults to 30000 for the default
    /// schedule and to 3/5 of --iters otherwise.
    #[arg(long)]
    pub lr_drop_iter: Option<u64>,
    #[arg(long, default_value_t = 10.0)]
    pub lr_drop_factor: f64,
    /// Print the loss to stderr every N iterations (0 disables).
    #[arg(long, default_value_t = 0)]
    pub log_every: u64,
    /// Also write the untrained weights as initial.gvtw.
    #[arg(long)]
    pub save_initial: bool,
}

#[derive(Clone, Debug, Args)]
pub struct EvalArgs {
    /// GVTW weight file; repeat to evaluate both variants.
    #[arg(long = "weights", required = true)]
    pub weights: Vec<PathBuf>,
    /// Directory of held-out PGM images.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Degradation QP; defaults to each model's QP tag.
    #[arg(long)]
    pub qp: Option<u8>,
    #[arg(long)]
    pub std_min: Option<f64>,
    #[arg(long)]
    pub std_max: Option<f64>,
    /// Training manifests whose inputs must not overlap the held-out corpus.
    /// The manifest next to each weight file is always consulted.
    #[arg(long)]
    pub exclude_manifest: Vec<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct SimulateArgs {
    /// Directory of PGM frames in display order.
    #[arg(long, conflicts_with = "raw", required_unless_present = "raw")]
    pub frames: Option<PathBuf>,
    /// Raw 8-bit luma file: Y planes back to back, no chroma.
    #[arg(long, requires_all = ["width", "height"])]
    pub raw: Option<PathBuf>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    /// Number of raw frames to read; defaults to all.
    #[arg(long)]
    pub frame_count: Option<usize>,
    #[arg(long)]
    pub weights_h: Option<PathBuf>,
    #[arg(long)]
    pub weights_q: Option<PathBuf>,
    /// dctif_only, gvtcnn_only or per_block_best.
    #[arg(long, default_value = "per_block_best")]
    pub mode: SelectionMode,
    #[arg(long, default_value_t = 37)]
    pub qp: u8,
    #[arg(long, default_value_t = 4.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 16)]
    pub block_size: usize,
    #[arg(long, default_value_t = 16)]
    pub search_range: usize,
}

#[derive(Clone, Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 24)]
    pub count: usize,
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    /// Write one moving scene (frame_NNNN.pgm) instead of independent images.
    #[arg(long)]
    pub sequence: bool,
    #[arg(long, default_value_t = 5)]
    pub frames: usize,
    /// Horizontal motion per frame in pixels.
    #[arg(long, default_value_t = 0.75, allow_hyphen_values = true)]
    pub velocity_x: f64,
    #[arg(long, default_value_t = -0.25, allow_hyphen_values = true)]
    pub velocity_y: f64,
}

#[derive(Clone, Debug, Args)]
pub struct ReplayArgs {
    /// Manifest to replay. Relative paths in it resolve against the current
    /// directory; --out-dir redirects the outputs.
    #[arg(long)]
    pub manifest: PathBuf,
}

/// Parses `argv` (program name first) and runs the command.
pub fn run_from<I, S>(argv: I) -> CliResult<()>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(&argv).map_err(|e| CliError::Usage(e.to_string()))?;
    run(cli, &argv[1.min(argv.len())..])
}

/// Runs a parsed command line; `args` is the raw command line after the
/// program name, recorded in the manifest.
pub fn run(cli: Cli, args: &[String]) -> CliResult<()> {
    if cli.common.threads > 0 {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.common.threads).build_global();
    }
    let common = &cli.common;
    match &cli.command {
        Command::GenData(a) => commands::gen_data(common, a, args),
        Command::Train(a) => commands::train(common, a, args),
        Command::EvalInterp(a) => commands::eval_interp(common, a, args),
        Command::Simulate(a) => commands::simulate(common, a, args),
        Command::Synth(a) => commands::synth(common, a, args),
        Command::Replay(a) => commands::replay(common, a, args),
    }
}
