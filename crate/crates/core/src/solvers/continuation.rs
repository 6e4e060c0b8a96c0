//! λ-continuation driver ("adaptive restart") shared by both solvers.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::fista::{solve_fista, FistaConfig, GammaSchedule};
use super::lv::{solve_lv, LvConfig, LvParams};
use super::{DataFit, StopRule};
use crate::clip::{build_masks, delta_sdr_clipped, ClipThreshold, SampleMasks, Signal};
use crate::error::{check_len, Error, Result};
use crate::gabor::{CoefGrid, GaborFrame, TransformParams};
use crate::shrinkage::{
    apply_with_lambda, count_nonzero, penalty, Neighborhood, ShrinkageKind, ShrinkageSpec, WeightExponent, WeightGrid,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Fista,
    Lv,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fista => "fista",
            Self::Lv => "lv",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fista" => Ok(Self::Fista),
            "lv" => Ok(Self::Lv),
            _ => Err(Error::Config(format!("unknown solver '{s}' (expected fista, lv)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    None,
    Parabolic,
}

impl Weighting {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Parabolic => "parabolic",
        }
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "parabolic" => Ok(Self::Parabolic),
            _ => Err(Error::Config(format!("unknown weighting '{s}' (expected none, parabolic)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContinuationConfig {
    pub lambda_start: f64,
    pub lambda_end: f64,
    pub n_outer: usize,
    pub n_inner: usize,
    /// Early break threshold on the ℓ2 step of the time-domain estimate.
    pub epsilon: f64,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            lambda_start: 1e-1,
            lambda_end: 1e-4,
            n_outer: 20,
            n_inner: 500,
            epsilon: 1e-3,
        }
    }
}

impl ContinuationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_end > 0.0 && self.lambda_start >= self.lambda_end && self.lambda_start.is_finite()) {
            return Err(Error::Config(format!(
                "need lambda_start ({}) >= lambda_end ({}) > 0",
                self.lambda_start, self.lambda_end
            )));
        }
        if self.n_outer == 0 || self.n_inner == 0 {
            return Err(Error::Config("n_outer and n_inner must be at least 1".into()));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config(format!("epsilon must be non-negative, got {}", self.epsilon)));
        }
        Ok(())
    }

    /// Logarithmically spaced thresholds from `lambda_start` to `lambda_end`.
    pub fn lambdas(&self) -> Vec<f64> {
        if self.n_outer == 1 {
            return vec![self.lambda_start];
        }
        let (a, b) = (self.lambda_start.log10(), self.lambda_end.log10());
        let last = (self.n_outer - 1) as f64;
        (0..self.n_outer)
            .map(|j| 10f64.powf(a + (b - a) * j as f64 / last))
            .collect()
    }
}

/// Everything a declipping run needs besides the signal and θc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeclipConfig {
    pub solver: SolverKind,
    pub shrinkage: ShrinkageKind,
    pub neighborhood: Neighborhood,
    pub weighting: Weighting,
    pub weight_exponent: WeightExponent,
    pub transform: TransformParams,
    pub continuation: ContinuationConfig,
    pub gamma: GammaSchedule,
    pub lv: LvParams,
}

impl Default for DeclipConfig {
    fn default() -> Self {
        Self {
            solver: SolverKind::Lv,
            shrinkage: ShrinkageKind::Pew,
            neighborhood: Neighborhood::default(),
            weighting: Weighting::None,
            weight_exponent: WeightExponent::Linear,
            transform: TransformParams::default(),
            continuation: ContinuationConfig::default(),
            gamma: GammaSchedule::Fista,
            lv: LvParams::default(),
        }
    }
}

/// Diagnostics of one continuation stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: usize,
    pub lambda: f64,
    pub iterations: usize,
    pub data_reliable: f64,
    pub data_high: f64,
    pub data_low: f64,
    /// `λR` for L and WGL; absent for the empirical shrinkages.
    pub penalty: Option<f64>,
    pub objective: Option<f64>,
    pub nonzero_coefs: usize,
    /// Only when a clean reference was supplied.
    pub delta_sdr_clipped_db: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SolverRun {
    pub solver: SolverKind,
    pub shrinkage: ShrinkageSpec,
    pub continuation: ContinuationConfig,
    pub trace: Vec<StageRecord>,
    /// Coefficients at the end of the last stage: `ẑ` for FISTA, `Ax` for LV.
    pub coefs: CoefGrid,
}

impl SolverRun {
    pub fn total_iterations(&self) -> usize {
        self.trace.iter().map(|s| s.iterations).sum()
    }

    pub fn final_lambda(&self) -> Option<f64> {
        self.trace.last().map(|s| s.lambda)
    }
}

/// Declips `y` with masks derived from `theta`.
pub fn declip(y: &Signal, theta: ClipThreshold, cfg: &DeclipConfig) -> Result<(Signal, SolverRun)> {
    let masks = build_masks(y, theta);
    declip_with_masks(y, &masks, theta, cfg, None)
}

/// Full continuation run. The signal is zero padded (padding counts as
/// reliable), each stage warm-starts from the previous one, and the result
/// is cropped back to the input length. Reliable samples are not replaced.
pub fn declip_with_masks(
    y: &Signal,
    masks: &SampleMasks,
    theta: ClipThreshold,
    cfg: &DeclipConfig,
    reference: Option<&Signal>,
) -> Result<(Signal, SolverRun)> {
    cfg.continuation.validate()?;
    cfg.neighborhood.validate()?;
    check_len(y.len(), masks.total_len())?;
    if let Some(r) = reference {
        check_len(y.len(), r.len())?;
    }

    let (gcfg, padding) = cfg.transform.for_signal(y.len())?;
    let frame = GaborFrame::new(gcfg)?;
    let data = DataFit::new(
        padding.pad(y.samples()),
        masks.padded(padding.before, padding.after),
        theta,
    )?;
    let weights = match cfg.weighting {
        Weighting::None => None,
        Weighting::Parabolic => Some(Arc::new(WeightGrid::parabolic(gcfg.n_channels, gcfg.n_frames()))),
    };
    let lambdas = cfg.continuation.lambdas();
    let spec = ShrinkageSpec::new(cfg.shrinkage, lambdas[0])
        .with_neighborhood(cfg.neighborhood)
        .with_weights(weights)
        .with_weight_exponent(cfg.weight_exponent);
    spec.validate()?;
    let stop = StopRule {
        max_iter: cfg.continuation.n_inner,
        epsilon: cfg.continuation.epsilon,
    };

    let mut trace = Vec::with_capacity(lambdas.len());
    let finish_stage = |stage: usize, lambda: f64, iterations: usize, x: &[f64], coefs: &CoefGrid, nonzero: usize| {
        let terms = data.terms(x);
        let pen = penalty(coefs, &spec, lambda);
        let delta = reference.and_then(|r| {
            let est = Signal::new(padding.crop(x).to_vec(), y.sample_rate()).ok()?;
            delta_sdr_clipped(r, y, &est, masks).ok()
        });
        StageRecord {
            stage,
            lambda,
            iterations,
            data_reliable: terms.reliable,
            data_high: terms.high,
            data_low: terms.low,
            penalty: pen,
            objective: pen.map(|p| p + terms.total()),
            nonzero_coefs: nonzero,
            delta_sdr_clipped_db: delta,
        }
    };

    let (estimate, coefs) = match cfg.solver {
        SolverKind::Fista => {
            let fcfg = FistaConfig::new(cfg.gamma, frame.op_norm_sq())?;
            let mut z = frame.analyze(data.observed())?;
            let mut x = data.observed().to_vec();
            for (stage, &lambda) in lambdas.iter().enumerate() {
                let out = solve_fista(&frame, &data, &spec, &fcfg, lambda, &z, stop)?;
                let nz = count_nonzero(&out.coefs);
                trace.push(finish_stage(stage, lambda, out.iterations, &out.signal, &out.coefs, nz));
                z = out.coefs;
                x = out.signal;
            }
            (x, z)
        }
        SolverKind::Lv => {
            let lv = LvConfig::from_params(cfg.lv, frame.op_norm_sq())?;
            let mut x = data.observed().to_vec();
            let mut u = CoefGrid::zeros_for(&gcfg);
            let mut ax = frame.analyze(&x)?;
            for (stage, &lambda) in lambdas.iter().enumerate() {
                let out = solve_lv(&frame, &data, &spec, &lv, lambda, &x, &u, stop)?;
                ax = frame.analyze(&out.signal)?;
                let nz = count_nonzero(&apply_with_lambda(&ax, &spec, lambda)?);
                trace.push(finish_stage(stage, lambda, out.iterations, &out.signal, &ax, nz));
                x = out.signal;
                u = out.dual;
            }
            (x, ax)
        }
    };

    let spec = ShrinkageSpec {
        lambda: *lambdas.last().expect("at least one stage"),
        ..spec
    };
    let signal = Signal::new(padding.crop(&estimate).to_vec(), y.sample_rate())?;
    Ok((
        signal,
        SolverRun {
            solver: cfg.solver,
            shrinkage: spec,
            continuation: cfg.continuation,
            trace,
            coefs,
        },
    ))
}
