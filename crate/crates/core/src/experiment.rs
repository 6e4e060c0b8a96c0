//! Evaluation harness: sweeps input SDR × solver × shrinkage × weighting over
//! a set of signals and tabulates the restoration quality.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clip::{
    build_masks, delta_sdr_clipped, hard_clip, replace_reliable, sdr, threshold_for_input_sdr, ClipThreshold, Signal,
    DEFAULT_SDR_TOL_DB,
};
use crate::error::{Error, Result};
use crate::fixtures::Fixture;
use crate::gabor::{bin_multiplicity, CoefGrid, TransformParams};
use crate::shrinkage::{apply_shrinkage, neighborhood_energy, Neighborhood, ShrinkageKind, ShrinkageSpec, WeightExponent};
use crate::solvers::{declip_with_masks, ContinuationConfig, DeclipConfig, GammaSchedule, LvParams, SolverKind, SolverRun, StageRecord, Weighting};
use crate::wav::read_wav;

/// Prefix selecting a built-in signal instead of a file, e.g. `synth:chirp`.
pub const SYNTH_PREFIX: &str = "synth:";

fn default_sdrs() -> Vec<f64> {
    vec![1.0, 3.0, 5.0, 7.0, 10.0, 15.0, 20.0]
}

fn default_solvers() -> Vec<SolverKind> {
    vec![SolverKind::Fista, SolverKind::Lv]
}

fn default_shrinkages() -> Vec<ShrinkageKind> {
    ShrinkageKind::ALL.to_vec()
}

fn default_weighting() -> Vec<Weighting> {
    vec![Weighting::None]
}

fn default_sdr_tol() -> f64 {
    DEFAULT_SDR_TOL_DB
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    /// WAV paths, or `synth:<fixture>`.
    pub files: Vec<String>,
    #[serde(default = "default_sdrs")]
    pub input_sdrs_db: Vec<f64>,
    #[serde(default = "default_solvers")]
    pub solvers: Vec<SolverKind>,
    #[serde(default = "default_shrinkages")]
    pub shrinkages: Vec<ShrinkageKind>,
    #[serde(default = "default_weighting")]
    pub weighting: Vec<Weighting>,
    #[serde(default)]
    pub transform: TransformParams,
    #[serde(default)]
    pub continuation: ContinuationConfig,
    #[serde(default)]
    pub neighborhood: Neighborhood,
    #[serde(default)]
    pub weight_exponent: WeightExponent,
    #[serde(default)]
    pub gamma: GammaSchedule,
    #[serde(default)]
    pub lv: LvParams,
    /// Accuracy of the θc search, in dB.
    #[serde(default = "default_sdr_tol")]
    pub sdr_tol_db: f64,
    /// Channel to take from multichannel files.
    #[serde(default)]
    pub channel: Option<usize>,
}

impl ExperimentPlan {
    pub fn new(files: Vec<String>) -> Self {
        Self {
            files,
            input_sdrs_db: default_sdrs(),
            solvers: default_solvers(),
            shrinkages: default_shrinkages(),
            weighting: default_weighting(),
            transform: TransformParams::default(),
            continuation: ContinuationConfig::default(),
            neighborhood: Neighborhood::default(),
            weight_exponent: WeightExponent::default(),
            gamma: GammaSchedule::default(),
            lv: LvParams::default(),
            sdr_tol_db: default_sdr_tol(),
            channel: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let axes = [
            ("files", self.files.len()),
            ("input_sdrs_db", self.input_sdrs_db.len()),
            ("solvers", self.solvers.len()),
            ("shrinkages", self.shrinkages.len()),
            ("weighting", self.weighting.len()),
        ];
        if let Some((name, _)) = axes.iter().find(|(_, n)| *n == 0) {
            return Err(Error::Config(format!("plan axis '{name}' is empty")));
        }
        if let Some(s) = self.input_sdrs_db.iter().find(|s| !s.is_finite()) {
            return Err(Error::Config(format!("input SDR {s} is not finite")));
        }
        if !(self.sdr_tol_db > 0.0) {
            return Err(Error::Config("sdr_tol_db must be positive".into()));
        }
        self.continuation.validate()?;
        self.neighborhood.validate()
    }

    /// Number of (file, SDR, solver, shrinkage, weighting) cells.
    pub fn n_cells(&self) -> usize {
        self.files.len() * self.input_sdrs_db.len() * self.solvers.len() * self.shrinkages.len() * self.weighting.len()
    }

    fn declip_config(&self, solver: SolverKind, shrinkage: ShrinkageKind, weighting: Weighting) -> DeclipConfig {
        DeclipConfig {
            solver,
            shrinkage,
            neighborhood: self.neighborhood,
            weighting,
            weight_exponent: self.weight_exponent,
            transform: self.transform,
            continuation: self.continuation,
            gamma: self.gamma,
            lv: self.lv,
        }
    }
}

/// One row of the results table. Successful cells yield two rows, without
/// and with reliable-sample replacement; failed cells yield one row with
/// `error` set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub file: String,
    pub input_sdr_db: f64,
    pub solver: SolverKind,
    pub shrinkage: ShrinkageKind,
    pub weighted: bool,
    pub replaced: bool,
    pub theta_c: Option<f64>,
    #[serde(with = "sentinel")]
    pub delta_sdr_clipped_db: Option<f64>,
    pub iterations_total: usize,
    pub wall_time_s: f64,
    #[serde(with = "sentinel")]
    pub sdr_full_db: Option<f64>,
    pub error: Option<String>,
}

impl ResultRecord {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.file
            .cmp(&other.file)
            .then(self.input_sdr_db.total_cmp(&other.input_sdr_db))
            .then(self.solver.cmp(&other.solver))
            .then(self.shrinkage.cmp(&other.shrinkage))
            .then(self.weighted.cmp(&other.weighted))
            .then(self.replaced.cmp(&other.replaced))
    }
}

/// JSON cannot carry infinities; they travel as the strings `"inf"`/`"-inf"`.
mod sentinel {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if x.is_finite() => s.serialize_some(x),
            Some(x) => s.serialize_some(&super::format_float(*x)),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Num(x)) => Ok(Some(x)),
            Some(Repr::Text(t)) => t
                .parse::<f64>()
                .map(Some)
                .map_err(|_| serde::de::Error::custom(format!("invalid number '{t}'"))),
        }
    }
}

fn format_float(x: f64) -> String {
    // Display is the shortest representation that parses back exactly
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        x.to_string()
    }
}

pub fn load_input(spec: &str, channel: Option<usize>) -> Result<Signal> {
    match spec.strip_prefix(SYNTH_PREFIX) {
        Some(name) => Ok(name.parse::<Fixture>()?.signal()),
        None => read_wav(spec, channel),
    }
}

struct Cell<'a> {
    file: &'a str,
    source: std::result::Result<&'a Signal, String>,
    sdr_db: f64,
    solver: SolverKind,
    shrinkage: ShrinkageKind,
    weighting: Weighting,
}

fn error_record(c: &Cell<'_>, theta: Option<f64>, msg: String) -> ResultRecord {
    ResultRecord {
        file: c.file.to_string(),
        input_sdr_db: c.sdr_db,
        solver: c.solver,
        shrinkage: c.shrinkage,
        weighted: c.weighting != Weighting::None,
        replaced: false,
        theta_c: theta,
        delta_sdr_clipped_db: None,
        iterations_total: 0,
        wall_time_s: 0.0,
        sdr_full_db: None,
        error: Some(msg),
    }
}

fn run_cell(plan: &ExperimentPlan, c: &Cell<'_>) -> Vec<ResultRecord> {
    let x = match c.source {
        Ok(x) => x,
        Err(ref e) => return vec![error_record(c, None, e.clone())],
    };
    let theta = match threshold_for_input_sdr(x, c.sdr_db, plan.sdr_tol_db) {
        Ok(t) => t,
        Err(e) => return vec![error_record(c, None, e.to_string())],
    };
    match evaluate_cell(plan, c, x, theta) {
        Ok(records) => records,
        Err(e) => vec![error_record(c, Some(theta.value()), e.to_string())],
    }
}

fn evaluate_cell(plan: &ExperimentPlan, c: &Cell<'_>, x: &Signal, theta: ClipThreshold) -> Result<Vec<ResultRecord>> {
    let y = hard_clip(x, theta);
    let masks = build_masks(&y, theta);
    let cfg = plan.declip_config(c.solver, c.shrinkage, c.weighting);
    let start = Instant::now();
    let (raw, run) = declip_with_masks(&y, &masks, theta, &cfg, None)?;
    let wall = start.elapsed().as_secs_f64();
    let replaced = replace_reliable(&raw, &y, &masks)?;

    [(false, &raw), (true, &replaced)]
        .into_iter()
        .map(|(is_replaced, est)| {
            Ok(ResultRecord {
                file: c.file.to_string(),
                input_sdr_db: c.sdr_db,
                solver: c.solver,
                shrinkage: c.shrinkage,
                weighted: c.weighting != Weighting::None,
                replaced: is_replaced,
                theta_c: Some(theta.value()),
                delta_sdr_clipped_db: Some(delta_sdr_clipped(x, &y, est, &masks)?),
                iterations_total: run.total_iterations(),
                wall_time_s: wall,
                sdr_full_db: Some(sdr(x, est)?),
                error: None,
            })
        })
        .collect()
}

/// Runs every cell of the plan on at most `jobs` worker threads (all cores
/// when `None`). Records are sorted by their key, so the output does not
/// depend on scheduling.
pub fn run_plan(plan: &ExperimentPlan, jobs: Option<usize>) -> Result<Vec<ResultRecord>> {
    plan.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

    pool.install(|| {
        let inputs: Vec<std::result::Result<Signal, String>> = plan
            .files
            .par_iter()
            .map(|f| load_input(f, plan.channel).map_err(|e| e.to_string()))
            .collect();

        let mut cells = Vec::with_capacity(plan.n_cells());
        for (file, input) in plan.files.iter().zip(&inputs) {
            for &sdr_db in &plan.input_sdrs_db {
                for &solver in &plan.solvers {
                    for &shrinkage in &plan.shrinkages {
                        for &weighting in &plan.weighting {
                            cells.push(Cell {
                                file,
                                source: input.as_ref().map_err(Clone::clone),
                                sdr_db,
                                solver,
                                shrinkage,
                                weighting,
                            });
                        }
                    }
                }
            }
        }

        let mut records: Vec<ResultRecord> = cells.par_iter().flat_map_iter(|c| run_cell(plan, c)).collect();
        records.sort_by(ResultRecord::key_cmp);
        Ok(records)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(Error::Config(format!("unknown output format '{s}' (expected csv, json)"))),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Json => "json",
        })
    }
}

pub const CSV_COLUMNS: [&str; 12] = [
    "file",
    "input_sdr_db",
    "solver",
    "shrinkage",
    "weighted",
    "replaced",
    "theta_c",
    "delta_sdr_clipped_db",
    "iterations_total",
    "wall_time_s",
    "sdr_full_db",
    "error",
];

fn opt_float(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

pub fn emit_results(records: &[ResultRecord], format: OutputFormat) -> Result<Vec<u8>> {
    match format {
        OutputFormat::Json => {
            let mut out = serde_json::to_vec_pretty(records)?;
            out.push(b'\n');
            Ok(out)
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_COLUMNS)?;
            for r in records {
                w.write_record([
                    r.file.clone(),
                    format_float(r.input_sdr_db),
                    r.solver.to_string(),
                    r.shrinkage.to_string(),
                    r.weighted.to_string(),
                    r.replaced.to_string(),
                    opt_float(r.theta_c),
                    opt_float(r.delta_sdr_clipped_db),
                    r.iterations_total.to_string(),
                    format_float(r.wall_time_s),
                    opt_float(r.sdr_full_db),
                    r.error.clone().unwrap_or_default(),
                ])?;
            }
            w.into_inner()
                .map_err(|e| Error::Io(e.into_error()))
        }
    }
}

fn parse_field<T: FromStr>(row: &csv::StringRecord, i: usize) -> Result<T> {
    let raw = row.get(i).unwrap_or("");
    raw.parse()
        .map_err(|_| Error::Config(format!("column '{}': cannot parse '{raw}'", CSV_COLUMNS[i])))
}

fn parse_opt_float(row: &csv::StringRecord, i: usize) -> Result<Option<f64>> {
    match row.get(i) {
        None | Some("") => Ok(None),
        Some(_) => parse_field(row, i).map(Some),
    }
}

/// Inverse of [`emit_results`].
pub fn parse_results(bytes: &[u8], format: OutputFormat) -> Result<Vec<ResultRecord>> {
    match format {
        OutputFormat::Json => Ok(serde_json::from_slice(bytes)?),
        OutputFormat::Csv => {
            let mut rd = csv::Reader::from_reader(bytes);
            let header = rd.headers()?.clone();
            if header.iter().ne(CSV_COLUMNS.iter().copied()) {
                return Err(Error::Config(format!(
                    "unexpected CSV header: {}",
                    header.iter().collect::<Vec<_>>().join(",")
                )));
            }
            rd.records()
                .map(|row| {
                    let row = row?;
                    Ok(ResultRecord {
                        file: row[0].to_string(),
                        input_sdr_db: parse_field(&row, 1)?,
                        solver: parse_field(&row, 2)?,
                        shrinkage: parse_field(&row, 3)?,
                        weighted: parse_field(&row, 4)?,
                        replaced: parse_field(&row, 5)?,
                        theta_c: parse_opt_float(&row, 6)?,
                        delta_sdr_clipped_db: parse_opt_float(&row, 7)?,
                        iterations_total: parse_field(&row, 8)?,
                        wall_time_s: parse_field(&row, 9)?,
                        sdr_full_db: parse_opt_float(&row, 10)?,
                        error: Some(row[11].to_string()).filter(|s| !s.is_empty()),
                    })
                })
                .collect()
        }
    }
}

pub const TRACE_COLUMNS: [&str; 10] = [
    "stage",
    "lambda",
    "iterations",
    "data_reliable",
    "data_high",
    "data_low",
    "penalty",
    "objective",
    "nonzero_coefs",
    "delta_sdr_clipped_db",
];

/// Per-stage diagnostics of a run as CSV; absent values are empty fields.
pub fn emit_trace_csv(trace: &[StageRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_COLUMNS)?;
    for s in trace {
        w.write_record([
            s.stage.to_string(),
            format_float(s.lambda),
            s.iterations.to_string(),
            format_float(s.data_reliable),
            format_float(s.data_high),
            format_float(s.data_low),
            opt_float(s.penalty),
            opt_float(s.objective),
            s.nonzero_coefs.to_string(),
            opt_float(s.delta_sdr_clipped_db),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Per-bin mean over frames of the magnitude below which the operator
/// zeroes a coefficient of `grid`.
///
/// L gives `λw`. EW gives `λ√w` (or `λw` with squared weights). For the
/// neighborhood operators the zeroing decision depends on `‖N‖`, so the
/// value reported is the equivalent soft threshold on `|z|`: `λw·|z|/‖N‖`
/// for WGL and `λ√w·|z|/‖N‖` for PEW.
pub fn threshold_profile(grid: &CoefGrid, spec: &ShrinkageSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let (nb, nt) = (grid.n_bins(), grid.n_frames());
    if let Some(w) = &spec.weights {
        if w.n_bins() != nb || w.n_frames() != nt {
            return Err(Error::Dimension {
                expected: nb * nt,
                found: w.n_bins() * w.n_frames(),
            });
        }
    }
    let energy = spec
        .kind
        .uses_neighborhood()
        .then(|| neighborhood_energy(grid, spec.nbhd));
    let lambda = spec.lambda;
    let mut sums = vec![0.0; nb];
    for (i, c) in grid.as_slice().iter().enumerate() {
        let w = spec.weights.as_ref().map_or(1.0, |w| w.as_slice()[i]);
        let base = match spec.kind {
            ShrinkageKind::L | ShrinkageKind::Wgl => lambda * w,
            ShrinkageKind::Ew | ShrinkageKind::Pew => match spec.weight_exponent {
                WeightExponent::Linear => lambda * w.sqrt(),
                WeightExponent::Squared => lambda * w,
            },
        };
        let scale = match &energy {
            Some(e) if e[i] > 0.0 => c.norm_sqr().sqrt() / e[i].sqrt(),
            // an empty neighborhood has the coefficient at its center
            _ => 1.0,
        };
        sums[i % nb] += base * scale;
    }
    Ok(sums.into_iter().map(|s| s / nt as f64).collect())
}

/// Per-bin mean over frames of `|S(z)|/|z|`; coefficients with `z = 0`
/// count as zero gain.
pub fn magnitude_ratio_profile(grid: &CoefGrid, spec: &ShrinkageSpec) -> Result<Vec<f64>> {
    let shrunk = apply_shrinkage(grid, spec)?;
    let nb = grid.n_bins();
    let mut sums = vec![0.0; nb];
    for (i, (a, b)) in grid.as_slice().iter().zip(shrunk.as_slice()).enumerate() {
        let m = a.norm_sqr().sqrt();
        if m > 0.0 {
            sums[i % nb] += b.norm_sqr().sqrt() / m;
        }
    }
    Ok(sums.into_iter().map(|s| s / grid.n_frames() as f64).collect())
}

/// Threshold profile at the final stage of a run, on the run's own
/// coefficients.
pub fn run_threshold_profile(run: &SolverRun) -> Result<Vec<f64>> {
    threshold_profile(&run.coefs, &run.shrinkage)
}

/// CSV with columns `bin,frequency_hz,<value_name>`.
pub fn emit_profile_csv(profile: &[f64], n_channels: usize, sample_rate: u32, value_name: &str) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bin", "frequency_hz", value_name])?;
    for (f, v) in profile.iter().enumerate() {
        let hz = f as f64 * sample_rate as f64 / n_channels as f64;
        w.write_record([f.to_string(), format_float(hz), format_float(*v)])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Multiplicity-weighted mean of a per-bin profile over the full frequency
/// axis.
pub fn profile_mean(profile: &[f64], n_channels: usize) -> f64 {
    let (s, n) = profile.iter().enumerate().fold((0.0, 0.0), |(s, n), (f, v)| {
        let m = bin_multiplicity(f, n_channels);
        (s + m * v, n + m)
    });
    s / n
}
