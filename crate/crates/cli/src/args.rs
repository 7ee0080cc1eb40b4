//! Command-line surface.

use std::path::PathBuf;

use branchtrack::simulator::SimConfig;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "branchtrack",
    version,
    about = "Branch-identity tracking for time-series plant imagery"
)]
pub struct Cli {
    /// Pipeline configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the simulator and training seeds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Reject unknown keys in dataset files instead of ignoring them.
    #[arg(long, global = true)]
    pub strict_schema: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a labeled dataset and write it with a manifest.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        sim: SimOverrides,
    },
    /// Assign buds to branches frame by frame.
    Track {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Trained checkpoint, required for fusion-learned.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the learned gate or the attention scorer.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        target: TargetArg,
        /// Checkpoint destination.
        #[arg(long)]
        out: PathBuf,
        /// Training log CSV; defaults to the checkpoint path with `.log.csv`.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Score a tracking run against the dataset annotation.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        tracks: PathBuf,
        /// Report CSV destination.
        #[arg(long)]
        out: PathBuf,
        /// Directory for per-sequence SVG overlays.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Tabulate the overall aggregates of several evaluation reports.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Spatial,
    Temporal,
    FusionFixed,
    FusionLearned,
}

impl From<ModeArg> for branchtrack::tracker::TrackMode {
    fn from(m: ModeArg) -> Self {
        use branchtrack::tracker::TrackMode;
        match m {
            ModeArg::Spatial => TrackMode::Spatial,
            ModeArg::Temporal => TrackMode::Temporal,
            ModeArg::FusionFixed => TrackMode::FusionFixed,
            ModeArg::FusionLearned => TrackMode::FusionLearned,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Gate,
    Scorer,
}

/// Simulator settings that override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct SimOverrides {
    #[arg(long)]
    pub n_plants: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub dt_days: Option<f64>,
    #[arg(long)]
    pub dt_jitter: Option<f64>,
    #[arg(long)]
    pub entanglement: Option<f64>,
    #[arg(long)]
    pub occlusion: Option<f64>,
    #[arg(long)]
    pub correlated_occlusion: Option<f64>,
    #[arg(long)]
    pub emergence_start_day: Option<f64>,
    #[arg(long)]
    pub emergence_end_day: Option<f64>,
    #[arg(long)]
    pub min_branches: Option<usize>,
    #[arg(long)]
    pub max_branches: Option<usize>,
    #[arg(long)]
    pub sway_amplitude: Option<f64>,
    #[arg(long)]
    pub sway_period_days: Option<f64>,
    #[arg(long)]
    pub position_noise: Option<f64>,
    /// Comma-separated camera azimuths in degrees.
    #[arg(long, value_delimiter = ',')]
    pub views: Option<Vec<f64>>,
    #[arg(long)]
    pub render_masks: Option<bool>,
    #[arg(long)]
    pub raster_size: Option<usize>,
    #[arg(long)]
    pub stroke_px: Option<usize>,
}

impl SimOverrides {
    pub fn apply(&self, c: &mut SimConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    c.$f = v.clone();
                }
            )*};
        }
        set!(
            n_plants,
            frames,
            dt_days,
            dt_jitter,
            entanglement,
            occlusion,
            correlated_occlusion,
            emergence_start_day,
            emergence_end_day,
            min_branches,
            max_branches,
            sway_amplitude,
            sway_period_days,
            position_noise,
            views,
            render_masks,
            raster_size,
            stroke_px
        );
    }
}
