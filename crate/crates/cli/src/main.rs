mod args;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use serde::{Deserialize, Serialize};

use declip_core::experiment::{
    emit_profile_csv, emit_results, emit_trace_csv, run_plan, run_threshold_profile, ExperimentPlan, OutputFormat,
};
use declip_core::wav::{read_wav, write_wav, WavFormat};
use declip_core::{
    build_masks, declip_with_masks, delta_sdr_clipped, hard_clip, replace_reliable, sdr, threshold_for_input_sdr,
    ClipThreshold, DeclipConfig, Neighborhood, Signal,
};

use args::{BenchArgs, Cli, ClipArgs, Command, DeclipArgs, EvalArgs};

/// Effective settings of the `declip` subcommand.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct CliConfig {
    #[serde(flatten)]
    declip: DeclipConfig,
    theta_c: Option<f64>,
    replace_reliable: bool,
    output_format: WavFormat,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Clip(a) => clip(a),
        Command::Declip(a) => declip(*a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn warn(msg: impl std::fmt::Display) {
    eprintln!("warning: {msg}");
}

fn save(signal: &Signal, path: &Path, format: WavFormat) -> Result<()> {
    let report = write_wav(signal, path, format)?;
    if report.clamped > 0 {
        warn(format!(
            "{} samples outside the {format} range were clamped in {}",
            report.clamped,
            path.display()
        ));
    }
    Ok(())
}

fn clip(a: ClipArgs) -> Result<()> {
    let x = read_wav(&a.input, a.channel)?;
    let theta = match (a.theta, a.target_sdr) {
        (Some(t), _) => ClipThreshold::new(t)?,
        (None, Some(target)) => threshold_for_input_sdr(&x, target, declip_core::clip::DEFAULT_SDR_TOL_DB)?,
        (None, None) => unreachable!("clap requires one of --theta, --target-sdr"),
    };
    // the clipped level must survive the round trip through the file exactly
    let theta = match a.format {
        WavFormat::Float32 => ClipThreshold::new(theta.value() as f32 as f64)?,
        _ => theta,
    };
    let y = hard_clip(&x, theta);
    let masks = build_masks(&y, theta);
    println!("theta_c: {}", theta.value());
    println!("input_sdr_db: {}", sdr(&x, &y)?);
    println!("clipped_fraction: {}", masks.n_clipped() as f64 / y.len() as f64);
    save(&y, &a.output, a.format)
}

fn resolve_config(a: &DeclipArgs) -> Result<CliConfig> {
    let mut c = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("invalid config {}", p.display()))?
        }
        None => CliConfig::default(),
    };
    let d = &mut c.declip;
    macro_rules! set {
        ($($flag:expr => $field:expr),* $(,)?) => { $( if let Some(v) = $flag { $field = v; } )* };
    }
    set! {
        a.solver => d.solver,
        a.shrinkage => d.shrinkage,
        a.weights => d.weighting,
        a.weight_exponent => d.weight_exponent,
        a.win_len => d.transform.win_len,
        a.hop => d.transform.hop,
        a.channels => d.transform.n_channels,
        a.lambda_start => d.continuation.lambda_start,
        a.lambda_end => d.continuation.lambda_end,
        a.outer => d.continuation.n_outer,
        a.inner => d.continuation.n_inner,
        a.epsilon => d.continuation.epsilon,
        a.tau => d.lv.tau,
        a.rho => d.lv.rho,
        a.format => c.output_format,
    }
    if a.nbhd_freq.is_some() || a.nbhd_time.is_some() {
        d.neighborhood = Neighborhood::new(
            a.nbhd_freq.unwrap_or(d.neighborhood.n_freq),
            a.nbhd_time.unwrap_or(d.neighborhood.n_time),
        )?;
    }
    if a.theta.is_some() {
        c.theta_c = a.theta;
    }
    c.replace_reliable |= a.replace_reliable;
    c.declip.continuation.validate()?;
    c.declip.neighborhood.validate()?;
    Ok(c)
}

fn declip(a: DeclipArgs) -> Result<()> {
    let cfg = resolve_config(&a)?;
    if a.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let (input, output) = match (&a.input, &a.output) {
        (Some(i), Some(o)) => (i, o),
        _ => bail!("--in and --out are required"),
    };
    let y = read_wav(input, a.channel)?;
    let theta = match cfg.theta_c {
        Some(t) => ClipThreshold::new(t)?,
        None => {
            warn(format!(
                "no --theta given; assuming the input peak {} is the clipping threshold",
                y.peak()
            ));
            ClipThreshold::new(y.peak()).context("input is silent")?
        }
    };
    let reference = a.reference.as_ref().map(|p| read_wav(p, a.channel)).transpose()?;
    let masks = build_masks(&y, theta);
    if masks.n_clipped() == 0 {
        warn("no clipped samples detected");
    }
    let (restored, run) = declip_with_masks(&y, &masks, theta, &cfg.declip, reference.as_ref())?;
    let out = if cfg.replace_reliable {
        replace_reliable(&restored, &y, &masks)?
    } else {
        restored
    };
    save(&out, output, cfg.output_format)?;
    if let Some(p) = &a.trace {
        fs::write(p, emit_trace_csv(&run.trace)?).with_context(|| format!("cannot write {}", p.display()))?;
    }
    if let Some(p) = &a.threshold_profile {
        let profile = run_threshold_profile(&run)?;
        let csv = emit_profile_csv(&profile, run.coefs.n_channels(), y.sample_rate(), "threshold")?;
        fs::write(p, csv).with_context(|| format!("cannot write {}", p.display()))?;
    }
    eprintln!(
        "{} + {}: {} iterations over {} stages",
        run.solver,
        run.shrinkage.kind,
        run.total_iterations(),
        run.trace.len()
    );
    Ok(())
}

struct EvalReport {
    theta_c: f64,
    clipped_samples: usize,
    input_sdr_db: f64,
    output_sdr_db: Option<f64>,
    delta_sdr_clipped_db: Option<f64>,
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.4}")
    }
}

/// Infinities are not JSON numbers; they become the `"inf"` sentinel.
fn db_json(v: f64) -> serde_json::Value {
    if v.is_finite() {
        v.into()
    } else {
        fmt_db(v).into()
    }
}

fn eval(a: EvalArgs) -> Result<()> {
    let x = read_wav(&a.reference, a.channel)?;
    let y = read_wav(&a.degraded, a.channel)?;
    let theta = match a.theta {
        Some(t) => ClipThreshold::new(t)?,
        None => ClipThreshold::new(y.peak()).context("degraded signal is silent")?,
    };
    let masks = build_masks(&y, theta);
    let mut report = EvalReport {
        theta_c: theta.value(),
        clipped_samples: masks.n_clipped(),
        input_sdr_db: sdr(&x, &y)?,
        output_sdr_db: None,
        delta_sdr_clipped_db: None,
    };
    if let Some(p) = &a.restored {
        let r = read_wav(p, a.channel)?;
        report.output_sdr_db = Some(sdr(&x, &r)?);
        report.delta_sdr_clipped_db = Some(delta_sdr_clipped(&x, &y, &r, &masks)?);
    }
    if a.json {
        let v = serde_json::json!({
            "theta_c": report.theta_c,
            "clipped_samples": report.clipped_samples,
            "input_sdr_db": db_json(report.input_sdr_db),
            "output_sdr_db": report.output_sdr_db.map(db_json),
            "delta_sdr_clipped_db": report.delta_sdr_clipped_db.map(db_json),
        });
        println!("{}", serde_json::to_string_pretty(&v)?);
    } else {
        println!("theta_c: {}", report.theta_c);
        println!("clipped_samples: {}", report.clipped_samples);
        println!("input_sdr_db: {}", fmt_db(report.input_sdr_db));
        if let (Some(o), Some(d)) = (report.output_sdr_db, report.delta_sdr_clipped_db) {
            println!("output_sdr_db: {}", fmt_db(o));
            println!("delta_sdr_clipped_db: {}", fmt_db(d));
        }
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let text = fs::read_to_string(&a.plan).with_context(|| format!("cannot read {}", a.plan.display()))?;
    let plan = ExperimentPlan::from_json(&text).with_context(|| format!("invalid plan {}", a.plan.display()))?;
    let format = a.format.unwrap_or_else(|| match a.out.as_ref().and_then(|p| p.extension()) {
        Some(e) if e == "json" => OutputFormat::Json,
        _ => OutputFormat::Csv,
    });
    let records = run_plan(&plan, a.jobs)?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        warn(format!("{failed} cells failed; see the error column"));
    }
    let bytes = emit_results(&records, format)?;
    match &a.out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("cannot write {}", p.display()))?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}
