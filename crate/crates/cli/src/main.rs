//! `railsim`: generate railway routes and worlds, simulate sensors, export
//! datasets, stream frames and evaluate results.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit status for invalid or inconsistent configuration.
pub const EXIT_CONFIG: u8 = 3;
/// Exit status for file-system and network failures.
pub const EXIT_IO: u8 = 4;
/// Exit status for other runtime failures.
pub const EXIT_RUNTIME: u8 = 1;

#[derive(Debug, Parser)]
#[command(name = "railsim", version, about = "Synthetic railway sensor datasets")]
pub struct Cli {
    /// Worker threads; defaults to RAILSIM_THREADS or the number of cores.
    #[arg(long, global = true, env = "RAILSIM_THREADS")]
    threads: Option<usize>,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scenario file (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Replace an existing output directory written by railsim.
    #[arg(long)]
    force: bool,

    /// Warn about unknown configuration fields instead of failing.
    #[arg(long)]
    lenient: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a route and the train trajectory along it.
    Route {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build tracks, terrain and scene, and save the world container.
    World {
        #[command(flatten)]
        common: Common,
        /// Directory written by `route`; the route is generated otherwise.
        #[arg(long)]
        route: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the sensors along the trajectory and write and/or stream frames.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// World directory written by `world`.
        #[arg(long)]
        world: PathBuf,
        /// Trajectory file from `route`; recomputed from the world otherwise.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Dataset directory.
        #[arg(long, required_unless_present = "stream")]
        out: Option<PathBuf>,
        /// Serve frames over TCP at this address while simulating.
        #[arg(long)]
        stream: Option<String>,
        /// Clients to wait for before simulating.
        #[arg(long, default_value_t = 0)]
        wait_clients: usize,
        /// Skip LiDAR and camera frames below this index in an existing dataset.
        #[arg(long, default_value_t = 0)]
        resume_from: usize,
        /// Overrides the frame cap of the scenario window.
        #[arg(long)]
        max_frames: Option<usize>,
        /// Overrides the simulated duration in seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Evaluate a dataset with ICP odometry, or compare two datasets.
    Validate {
        /// Dataset directory written by `simulate`.
        #[arg(long)]
        dataset: PathBuf,
        /// Second dataset for a frame-by-frame cloud RMSE.
        #[arg(long)]
        against: Option<PathBuf>,
        /// Only compare points in front of the sensor.
        #[arg(long)]
        crop_front: bool,
        /// Use every n-th point for ICP.
        #[arg(long, default_value_t = 4)]
        stride: usize,
        /// Write the report (manifest.json) and odometry.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Render depth, segmentation and shaded images from one pose.
    Preview {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        world: PathBuf,
        /// Trajectory sample to take the vehicle pose from.
        #[arg(long, conflicts_with = "pose")]
        sample: Option<usize>,
        /// Vehicle pose as `north,east,down,yaw_deg` (NED, metres).
        #[arg(long, allow_hyphen_values = true)]
        pose: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a stored dataset over TCP.
    Stream {
        /// Dataset directory written by `simulate`.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        #[arg(long, default_value_t = 1)]
        wait_clients: usize,
        /// Seconds to wait for clients.
        #[arg(long, default_value_t = 30.0)]
        wait_timeout: f64,
        /// Pace messages by their timestamps.
        #[arg(long)]
        realtime: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
