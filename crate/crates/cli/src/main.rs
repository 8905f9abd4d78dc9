mod config;
mod run;
mod tools;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spu_core::positioning::YPairing;
use spu_core::Mode;

/// Singles processing unit model: simulate, process, receive, inspect.
#[derive(Debug, Parser)]
#[command(name = "spu", version, args_override_self = true)]
struct Cli {
    /// TOML file whose `[subcommand]` tables supply default flags.
    #[arg(long = "config", global = true, value_name = "FILE")]
    _config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Generate phantom events (and the matching LUT files).
    Simulate(SimulateArgs),
    /// Run the SPU pipeline on an event file or a live UDP event stream.
    Spu(SpuArgs),
    /// Receive uplink datagrams and export flood maps, spectra and stats.
    DaqHost(DaqHostArgs),
    /// Crystal lookup table tools.
    #[command(subcommand)]
    Clt(CltCmd),
    /// Print the event-rate and bandwidth budget.
    Rates(RatesArgs),
    /// Full SPU to DAQ host session over localhost UDP with checks.
    Loopback(LoopbackArgs),
    /// Regular-mode throughput against the 1 M/s and 4 M/s floors.
    Bench(BenchArgs),
}

#[derive(Debug, Args, Clone)]
struct PhantomArgs {
    #[arg(long, default_value_t = 100_000)]
    events: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Relative per-channel noise (standard deviation).
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Share of events with partial energy deposit.
    #[arg(long, default_value_t = 0.0)]
    compton_fraction: f64,
    #[arg(long, default_value_t = 0.4)]
    depth_spread: f64,
    #[arg(long, default_value_t = 1600)]
    gain_min: u16,
    #[arg(long, default_value_t = 2400)]
    gain_max: u16,
    #[arg(long, default_value_t = 2000)]
    max_time_offset_ps: i32,
    #[arg(long, default_value_t = 1_000_000)]
    period_ps: u64,
    #[arg(long, default_value_t = 0)]
    module: u8,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    phantom: PhantomArgs,
    /// Event file to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also stream the events as UDP datagrams to this address.
    #[arg(long)]
    send: Option<SocketAddr>,
    /// Directory for clt.bclt, peaks.pklt and times.tolt.
    #[arg(long)]
    luts_out: Option<PathBuf>,
    /// Crystal layout: a boundary or full CLT file (default uniform grid).
    #[arg(long)]
    clt: Option<PathBuf>,
    /// Seed a randomly warped layout instead of the uniform grid.
    #[arg(long, conflicts_with = "clt")]
    warp_seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Pairing {
    Crossed,
    Symmetric,
}

impl From<Pairing> for YPairing {
    fn from(p: Pairing) -> Self {
        match p {
            Pairing::Crossed => YPairing::Crossed,
            Pairing::Symmetric => YPairing::Symmetric,
        }
    }
}

#[derive(Debug, Args)]
struct SpuArgs {
    #[arg(long, default_value = "regular")]
    mode: Mode,
    /// Event file (26-byte records).
    #[arg(long, conflicts_with = "listen")]
    events: Option<PathBuf>,
    /// UDP port receiving raw event datagrams; an empty datagram ends the run.
    #[arg(long)]
    listen: Option<u16>,
    /// UDP port for downlink commands while listening.
    #[arg(long, default_value_t = 5001)]
    downlink: u16,
    /// DAQ host address for the uplink.
    #[arg(long)]
    peer: Option<SocketAddr>,
    /// Write the uplink as Ethernet frames to a capture file.
    #[arg(long)]
    capture: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    module: u8,
    /// Boundary or full CLT file for all blocks.
    #[arg(long)]
    clt: Option<PathBuf>,
    #[arg(long)]
    peaks: Option<PathBuf>,
    #[arg(long)]
    times: Option<PathBuf>,
    /// Directory holding clt.bclt, peaks.pklt and times.tolt.
    #[arg(long, conflicts_with_all = ["clt", "peaks", "times"])]
    luts: Option<PathBuf>,
    #[arg(long, default_value_t = 350)]
    window_low: u16,
    #[arg(long, default_value_t = 650)]
    window_high: u16,
    /// Right shift of the raw energy before spectrum binning.
    #[arg(long, default_value_t = 4)]
    energy_scale: u8,
    #[arg(long, value_enum, default_value_t = Pairing::Crossed)]
    y_pairing: Pairing,
    /// Write the statistics as JSON.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Seconds without events before a live run ends.
    #[arg(long, default_value_t = 10.0)]
    idle_timeout: f64,
}

#[derive(Debug, Args)]
struct DaqHostArgs {
    /// UDP port to receive on.
    #[arg(long, conflicts_with = "capture")]
    listen: Option<u16>,
    /// Read frames from a capture file instead of a socket.
    #[arg(long)]
    capture: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Seconds of silence after the first datagram that end the session.
    #[arg(long, default_value_t = 2.0)]
    idle_timeout: f64,
    /// Stop after this many datagrams.
    #[arg(long)]
    max_datagrams: Option<u64>,
    #[arg(long, default_value_t = 4)]
    energy_scale: u8,
    /// Also write every decoded singles record to singles.csv.
    #[arg(long)]
    singles_csv: bool,
}

#[derive(Debug, Subcommand)]
enum CltCmd {
    /// Convert between full and boundary CLT files (direction from the input).
    Convert { input: PathBuf, output: PathBuf },
    /// Validate a CLT file; full CLTs are also checked for separability.
    Check { input: PathBuf },
    /// Memory footprint of the full and boundary forms.
    Footprint {
        #[arg(long, default_value_t = 9)]
        n: u32,
        #[arg(long, default_value_t = 529)]
        k: u64,
    },
    /// Write a uniform or randomly warped CLT.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        warp_seed: Option<u64>,
        /// Write the dense 512×512 form instead of boundaries.
        #[arg(long)]
        full: bool,
    },
}

#[derive(Debug, Args)]
struct RatesArgs {
    #[arg(long, default_value_t = 200.0)]
    activity_uci: f64,
    #[arg(long, default_value_t = 25.6)]
    side_mm: f64,
    #[arg(long, default_value_t = 55.0)]
    radius_mm: f64,
    #[arg(long, default_value_t = 2.0)]
    singles_per_decay: f64,
    #[arg(long, default_value_t = 0.8)]
    efficiency: f64,
    #[arg(long, default_value_t = 4.0)]
    blocks: f64,
    #[arg(long, default_value_t = 12.0)]
    modules: f64,
    #[arg(long, default_value_t = 16.0)]
    bytes_per_event: f64,
    #[arg(long, default_value_t = 1e6)]
    max_rate_per_block: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct LoopbackArgs {
    #[command(flatten)]
    phantom: PhantomArgs,
    /// Use the uniform grid instead of a warped CLT.
    #[arg(long)]
    uniform_clt: bool,
    /// Write the report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 10.0)]
    seconds: f64,
    /// Distinct events in the replayed workload.
    #[arg(long, default_value_t = 65_536)]
    events: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> ExitCode {
    // Exit quietly when stdout is a closed pipe (`spu rates | head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let args = match config::merge(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    let result = match cli.command {
        Cmd::Simulate(a) => tools::simulate(a),
        Cmd::Spu(a) => run::spu(a),
        Cmd::DaqHost(a) => run::daq_host(a),
        Cmd::Clt(c) => tools::clt(c),
        Cmd::Rates(a) => tools::rates(a),
        Cmd::Loopback(a) => tools::loopback(a),
        Cmd::Bench(a) => tools::bench(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
