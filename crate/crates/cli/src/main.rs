//! `negdelay`: frequency response, poles, simulation and design sweeps for
//! negative-group-delay chains.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "negdelay", version, about = "Negative-group-delay LTI workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Amplitude, unwrapped phase and group delay over a log-spaced sweep.
    Bode(BodeArgs),
    /// Simulate a chain file and report the advance between `input` and `output`.
    Simulate(SimulateArgs),
    /// Design an n-stage cascade for an excess-gain budget.
    Design(DesignArgs),
    /// Measure advance against n, or run the Bessel order study.
    Sweep(SweepArgs),
    /// Poles and stability of an expression or chain.
    Poles(PolesArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Fft,
    Ode,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Normalization {
    /// The whole cascade is 3 dB down at the cutoff.
    Cascade,
    /// Every section is 3 dB down at the cutoff.
    PerSection,
}

#[derive(Args, Debug)]
pub struct OutputArgs {
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Directory that relative `--out` paths are resolved against.
    #[arg(long, env = "NEGDELAY_OUT_DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
pub struct TfSource {
    /// Stage expression, e.g. `bessel2(T=0.484)^2 * nd(T=0.22)^2`.
    #[arg(long)]
    expr: Option<String>,
    /// Chain file; its composite transfer function is used.
    #[arg(long)]
    chain: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BodeArgs {
    #[command(flatten)]
    source: TfSource,
    #[arg(long, default_value_t = 1e-2)]
    omega_min: f64,
    #[arg(long, default_value_t = 1e2)]
    omega_max: f64,
    #[arg(long, default_value_t = 200)]
    points: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Sample step in seconds.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// End of the simulated record in seconds.
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Both)]
    method: MethodArg,
    /// RK4 steps per sample for the ode method.
    #[arg(long, default_value_t = 4)]
    substeps: usize,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    chain: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct DesignArgs {
    #[arg(long)]
    n: u32,
    #[arg(long, default_value_t = 0.2)]
    gamma: f64,
    /// Cutoff in rad/s.
    #[arg(long, default_value_t = 1.0)]
    omega_c: f64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "NEGDELAY_OUT_DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Stage counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,10")]
    n_values: Vec<u32>,
    #[arg(long, default_value_t = 0.2)]
    gamma: f64,
    /// Cutoff in rad/s.
    #[arg(long, default_value_t = 1.0)]
    omega_c: f64,
    /// Source pulse width in seconds; defaults to 1/omega_c.
    #[arg(long)]
    width: Option<f64>,
    /// Run the low-pass order study over these even orders instead.
    #[arg(long, value_delimiter = ',')]
    bessel_orders: Option<Vec<u32>>,
    /// Cutoff convention of the order study.
    #[arg(long, value_enum, default_value_t = Normalization::Cascade)]
    normalization: Normalization,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct PolesArgs {
    #[command(flatten)]
    source: TfSource,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "NEGDELAY_OUT_DIR")]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bode(a) => commands::bode(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Design(a) => commands::design(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Poles(a) => commands::poles(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("negdelay: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
