use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod spec;

use spec::{AxisSpec, FixSpec, RangeSpec};

/// Wannier-Stark resonances, exceptional points and parameter loops of a
/// tilted bichromatic lattice.
#[derive(Debug, Parser)]
#[command(name = "wsep", version, after_long_help = commands::defaults_help())]
struct Cli {
    /// TOML configuration; missing keys take the defaults listed below.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (overridden by WSEP_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory (overrides `output_dir` from the configuration).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Point {
    /// Inverse field strength 1/F.
    #[arg(long = "invF", alias = "inv-f", allow_hyphen_values = true)]
    inv_field: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    phi: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Most stable resonances at one parameter point.
    Spectrum {
        #[command(flatten)]
        point: Point,
        /// Number of representatives to report.
        #[arg(long, default_value_t = 2)]
        n_keep: usize,
        /// Choose the CAP strength from a plateau scan first.
        #[arg(long)]
        select_cap: bool,
        /// Write right eigenvectors as binary dumps.
        #[arg(long)]
        dump_states: bool,
    },
    /// Gap |E1 - E2| over a parameter plane, with local minima as EP seeds.
    Scan {
        /// Fixed coordinate, e.g. `delta=1`.
        #[arg(long)]
        fix: FixSpec,
        /// Scan axis `name=min:max:count`; give exactly two.
        #[arg(long = "axis", num_args = 1, required = true, allow_hyphen_values = true)]
        axes: Vec<AxisSpec>,
        /// Run the simplex search from every seed.
        #[arg(long)]
        certify: bool,
    },
    /// Simplex localization and certification of an EP from a guess.
    FindEp {
        #[command(flatten)]
        point: Point,
        /// Coordinates kept fixed during the search.
        #[arg(long, value_delimiter = ',', default_value = "delta")]
        freeze: Vec<String>,
    },
    /// Continuation of the EP curve through parameter space.
    TraceEp {
        #[command(flatten)]
        point: Point,
        /// Coordinates frozen while locating the starting EP.
        #[arg(long, value_delimiter = ',', default_value = "delta")]
        freeze: Vec<String>,
        /// Shell radius (defaults to `ep.shell_radius`).
        #[arg(long)]
        radius: Option<f64>,
        /// Maximum number of curve points (defaults to `ep.max_points`).
        #[arg(long)]
        max_points: Option<usize>,
    },
    /// Adiabatic loop in the (1/F, phi) plane around a centre.
    Loop {
        #[command(flatten)]
        point: Point,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        cycles: Option<usize>,
        /// Shift of the loop centre in 1/F.
        #[arg(long = "offset-invF", alias = "offset-inv-f", default_value_t = 0.0, allow_hyphen_values = true)]
        offset_inv_field: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        offset_phi: f64,
        /// Traverse clockwise.
        #[arg(long)]
        reversed: bool,
    },
    /// Mean-field resonances and crossing classification over an F scan.
    Nonlinear {
        #[command(flatten)]
        point: Point,
        /// Interaction strength (defaults to `lattice.g`).
        #[arg(long, allow_hyphen_values = true)]
        g: Option<f64>,
        /// Field scan `min:max:count`.
        #[arg(long = "scan-F", alias = "scan-f")]
        scan_f: Option<RangeSpec>,
        #[arg(long)]
        dump_states: bool,
    },
    /// Fast invariant checks of the whole pipeline.
    Selftest,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(commands::Failure::Domain(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
