use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use declip_core::experiment::OutputFormat;
use declip_core::wav::WavFormat;
use declip_core::{ShrinkageKind, SolverKind, WeightExponent, Weighting};

#[derive(Debug, Parser)]
#[command(name = "declip", version, about = "Restore hard-clipped audio by sparse time-frequency regularization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Hard-clip a signal at a threshold or at a target input SDR.
    Clip(ClipArgs),
    /// Restore a clipped signal.
    Declip(Box<DeclipArgs>),
    /// Compare a restoration against the clean reference.
    Eval(EvalArgs),
    /// Run an experiment plan and tabulate the results.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct ClipArgs {
    #[arg(long = "in", value_name = "WAV")]
    pub input: PathBuf,
    #[arg(long = "out", value_name = "WAV")]
    pub output: PathBuf,
    /// Clipping threshold.
    #[arg(long, conflicts_with = "target_sdr", required_unless_present = "target_sdr")]
    pub theta: Option<f64>,
    /// Input SDR in dB the clipped signal should have.
    #[arg(long)]
    pub target_sdr: Option<f64>,
    #[arg(long)]
    pub channel: Option<usize>,
    #[arg(long, default_value_t = WavFormat::Float32)]
    pub format: WavFormat,
}

#[derive(Debug, Args)]
pub struct DeclipArgs {
    #[arg(long = "in", value_name = "WAV", required_unless_present = "print_config")]
    pub input: Option<PathBuf>,
    #[arg(long = "out", value_name = "WAV", required_unless_present = "print_config")]
    pub output: Option<PathBuf>,
    /// JSON file with default settings; flags take precedence.
    #[arg(long, value_name = "JSON")]
    pub config: Option<PathBuf>,
    /// Print the effective configuration as JSON and exit.
    #[arg(long)]
    pub print_config: bool,

    #[arg(long)]
    pub solver: Option<SolverKind>,
    #[arg(long)]
    pub shrinkage: Option<ShrinkageKind>,
    #[arg(long, value_name = "none|parabolic")]
    pub weights: Option<Weighting>,
    #[arg(long, value_name = "linear|squared", value_parser = parse_exponent)]
    pub weight_exponent: Option<WeightExponent>,
    /// Clipping threshold; defaults to the peak of the input.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Copy reliable samples of the input into the output.
    #[arg(long)]
    pub replace_reliable: bool,
    /// Write per-stage diagnostics as CSV.
    #[arg(long, value_name = "CSV")]
    pub trace: Option<PathBuf>,
    /// Clean signal; adds the ΔSDRc column to the trace.
    #[arg(long = "ref", value_name = "WAV")]
    pub reference: Option<PathBuf>,
    /// Write the per-bin average shrinkage threshold of the last stage as CSV.
    #[arg(long, value_name = "CSV")]
    pub threshold_profile: Option<PathBuf>,
    #[arg(long)]
    pub channel: Option<usize>,
    #[arg(long)]
    pub format: Option<WavFormat>,

    #[arg(long)]
    pub win_len: Option<usize>,
    #[arg(long)]
    pub hop: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub nbhd_freq: Option<usize>,
    #[arg(long)]
    pub nbhd_time: Option<usize>,
    #[arg(long)]
    pub lambda_start: Option<f64>,
    #[arg(long)]
    pub lambda_end: Option<f64>,
    #[arg(long)]
    pub outer: Option<usize>,
    #[arg(long)]
    pub inner: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long = "ref", value_name = "WAV")]
    pub reference: PathBuf,
    #[arg(long, value_name = "WAV")]
    pub degraded: PathBuf,
    #[arg(long, value_name = "WAV")]
    pub restored: Option<PathBuf>,
    /// Clipping threshold of the degraded file; defaults to its peak.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub channel: Option<usize>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_name = "JSON")]
    pub plan: PathBuf,
    /// Results file; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Defaults to the extension of --out, else csv.
    #[arg(long)]
    pub format: Option<OutputFormat>,
    /// Worker threads; all cores when unset.
    #[arg(long, env = "DECLIP_JOBS")]
    pub jobs: Option<usize>,
}

fn parse_exponent(s: &str) -> Result<WeightExponent, String> {
    match s {
        "linear" | "1" => Ok(WeightExponent::Linear),
        "squared" | "2" => Ok(WeightExponent::Squared),
        _ => Err(format!("expected linear or squared, got '{s}'")),
    }
}
